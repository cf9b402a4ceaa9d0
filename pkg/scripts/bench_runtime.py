"""Inference time against the number of pairwise factors (102 attributes, random graphs).

    python scripts/bench_runtime.py --iterations 2 4 --out results/bench.csv
"""

import argparse

from attrcrf.cli import bench_rows, write_bench_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-vars", type=int, default=102)
    ap.add_argument("--pairs", type=int, nargs="+", default=[0, 100, 200, 300, 400, 500, 600, 700, 800, 900])
    ap.add_argument("--iterations", type=int, nargs="+", default=[2, 4])
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows = []
    for t in args.iterations:
        rows += bench_rows(args.n_vars, args.pairs, t, args.reps, args.batch, seed=0)
    print(f"{'pairs':>6} {'T':>3} {'ms/sample':>10} {'predict ms/sample':>18}")
    for r in rows:
        print(f"{r['n_pairwise']:>6} {r['iterations']:>3} {r['per_sample_seconds'] * 1e3:>10.4f} "
              f"{r['predict_per_sample_seconds'] * 1e3:>18.4f}")
    if args.out:
        write_bench_csv(args.out, rows)


if __name__ == "__main__":
    main()
