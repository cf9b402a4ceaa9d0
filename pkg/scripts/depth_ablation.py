"""Propagation depth and shared vs. per-round potentials for the Linear CRF.

    python scripts/depth_ablation.py --depths 1 2 4 8 --seeds 5
"""

import argparse
import logging

from attrcrf.experiments import compare, depth_variants


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depths", type=int, nargs="+", default=[2, 8])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    result = compare(depth_variants(args.depths), seeds=range(args.seeds), threads=args.threads)
    print(result.table())
    if args.out:
        result.write_csv(args.out)


if __name__ == "__main__":
    main()
