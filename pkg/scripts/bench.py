"""Insert / seal / per-record verify timings against day size for both backends.

    python scripts/bench.py --sizes 1000,2500,5000,10000 --repeats 3 --out results/bench.csv
"""

import argparse
import sys
from pathlib import Path

from seclaas import accumulator as acc
from seclaas.bench import run_bench, to_csv
from seclaas.crypto import generate_keys
from seclaas.model import Backend


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,2500,5000,10000")
    ap.add_argument("--repeats", type=int, default=1)
    ap.add_argument("--rsa-bits", type=int, default=64)
    ap.add_argument("--bloom-capacity", type=int, default=10_000)
    ap.add_argument("--bloom-fp", type=float, default=0.01)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    keys = generate_keys()
    rows = run_bench(Backend.BLOOM, sizes, keys, bloom=acc.derive_bloom_params(args.bloom_capacity, args.bloom_fp),
                     repeats=args.repeats)
    rows += run_bench(Backend.RSA, sizes, keys, rsa=acc.generate_rsa_params(args.rsa_bits), repeats=args.repeats)
    text = to_csv(rows)
    sys.stdout.write(text)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
