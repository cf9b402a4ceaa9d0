"""Sigmoid baseline vs. Const CRF vs. Linear CRF on the synthetic setup.

    python scripts/compare_models.py --seeds 5 --out results/models.csv
"""

import argparse
import logging

from attrcrf.experiments import MODEL_VARIANTS, compare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", help="per-seed CSV")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    result = compare(MODEL_VARIANTS, seeds=range(args.seeds), threads=args.threads)
    print(result.table())
    gap = result.mean_f1("linear_crf") - result.mean_f1("sigmoid")
    print(f"linear_crf - sigmoid: {gap:+.4f}")
    if args.out:
        result.write_csv(args.out)


if __name__ == "__main__":
    main()
