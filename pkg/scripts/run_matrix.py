"""Run the attack matrix on both backends plus the planted-record rate study.

    python scripts/run_matrix.py --out results/matrix.json
"""

import argparse
import json
import random
import sys
import tempfile
from pathlib import Path

from seclaas import accumulator as acc
from seclaas.attacks import build_day, default_matrix, plant_acceptance
from seclaas.crypto import generate_keys
from seclaas.model import Backend


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--rsa-bits", type=int, default=64)
    ap.add_argument("--plant-trials", type=int, default=10_000)
    ap.add_argument("--bloom-capacity", type=int, default=1000)
    ap.add_argument("--bloom-fp", type=float, default=0.01)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    keys = generate_keys()
    report = default_matrix(keys, seed=args.seed, rsa_bits=args.rsa_bits)
    print(report.summary())

    plant = {}
    with tempfile.TemporaryDirectory() as tmp:
        bloom = acc.derive_bloom_params(args.bloom_capacity, args.bloom_fp)
        fx = build_day(Path(tmp) / "bloom", keys, Backend.BLOOM, args.bloom_capacity, args.seed, bloom=bloom)
        plant["bloom"] = plant_acceptance(fx, args.plant_trials, args.seed)
        rsa = acc.generate_rsa_params(args.rsa_bits, random.Random(args.seed))
        fx = build_day(Path(tmp) / "rsa", keys, Backend.RSA, 100, args.seed, rsa=rsa)
        plant["rsa"] = plant_acceptance(fx, args.plant_trials, args.seed)
    for name, (member, audit) in plant.items():
        print(f"planted {name}: membership pass rate {member:.5f}, full audit pass rate {audit:.5f}")

    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        doc = report.to_json()
        doc["plant"] = {k: {"membership": m, "audit": a, "trials": args.plant_trials} for k, (m, a) in plant.items()}
        args.out.write_text(json.dumps(doc, indent=2) + "\n")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
