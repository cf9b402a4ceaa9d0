"""Graph-construction policies (min / top / rand) at a matched number of pairwise factors.

    python scripts/policy_ablation.py --seeds 5 --k 2
"""

import argparse
import logging

from attrcrf.experiments import POLICY_VARIANTS, compare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--k", type=int, default=2, help="K of the min policy; top/rand use its factor count")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    result = compare(POLICY_VARIANTS, seeds=range(args.seeds), k=args.k, threads=args.threads)
    print(result.table())
    if args.out:
        result.write_csv(args.out)


if __name__ == "__main__":
    main()
