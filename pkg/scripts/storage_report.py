"""Proof storage per sealed day, extrapolated to 10,000 records.

    python scripts/storage_report.py
"""

import argparse
import sys

from seclaas.bench import storage_report

REFERENCE_BLOOM_BITS = {"bloom-1%-10k": 91133, "bloom-0.1%-10k": 111945}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", default="250,1000")
    args = ap.parse_args()

    rows = storage_report(records=[int(x) for x in args.records.split(",")])
    print(f"{'profile':<16}{'records':>8}{'bloom bits':>12}{'sealed B':>10}{'digits':>8}"
          f"{'witness B':>11}{'proof file B':>14}")
    for r in rows:
        print(f"{r.profile:<16}{r.records:>8}{r.bloom_bits:>12}{r.sealed_bytes:>10}{r.sealed_digits:>8}"
              f"{r.witness_bytes:>11}{r.proof_file_bytes:>14}")

    last = {r.profile: r for r in rows}
    print("\nper day at 10,000 records (raw bytes):")
    for name, r in last.items():
        total = r.sealed_bytes + r.per_record_witness * 10_000
        note = ""
        if name in REFERENCE_BLOOM_BITS:
            note = f"  (reference bit count {REFERENCE_BLOOM_BITS[name]}, ours {r.bloom_bits})"
        print(f"  {name:<16}{total / 1024:>10.2f} KiB{note}")
    ratio = last["rsa-32"].per_record_witness * 10_000 / last["bloom-0.1%-10k"].sealed_bytes
    print(f"\nRSA-32 witnesses vs Bloom 0.1%: {ratio:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
