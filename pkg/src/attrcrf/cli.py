"""Command-line interface.

Subcommands: ``gen-data``, ``build-graph``, ``train``, ``eval``, ``check`` and
``bench``. Machine-readable results go to stdout as JSON lines, human
summaries to stderr. Exit codes: 0 success, 2 configuration or input error,
3 numerical failure (divergence or a failed self-check).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import checks
from .checkpoint import CheckpointError, load_model, save_model
from .config import ConfigError, ExperimentConfig
from .data import DataError, generate_synthetic, load_dataset, load_dataset_dir, save_dataset
from .graph import POLICIES, GraphError, build_graph, graph_stats, load_graph, save_graph
from .inference import InferenceConfig, InferenceError, TableSet, run_sum_product, write_marginals_csv
from .oracle import OracleError
from .trainer import MODEL_KINDS, DivergenceError, evaluate, init_model, predict, train, write_history_csv

log = logging.getLogger("attrcrf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
INPUT_ERRORS = (ConfigError, DataError, GraphError, CheckpointError, InferenceError, OracleError, OSError)


def emit(record: dict) -> None:
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
    sys.stdout.flush()


def human(msg: str) -> None:
    print(msg, file=sys.stderr)


def load_config(args) -> ExperimentConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    base = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {k: getattr(args, k) for k in ExperimentConfig.field_names() if hasattr(args, k)}
    return base.merged(overrides)


# --- commands ---------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = load_config(args)
    if not cfg.out:
        raise ConfigError("gen-data needs --out DIR")
    ds, truth = generate_synthetic(**cfg.generator_kwargs())
    paths = save_dataset(ds, cfg.out)
    save_graph(truth.graph, os.path.join(cfg.out, "truth_graph.json"))
    counts = {name: int((ds.split == name).sum()) for name in ("train", "val", "test")}
    emit({"command": "gen-data", "rows": len(ds.labels), "n_attrs": ds.n_attrs, "n_features": ds.n_features,
          "hidden": list(truth.hidden), "split": counts, "paths": paths})
    human(f"wrote {len(ds.labels)} rows ({ds.n_attrs} attributes, {ds.n_features} features) to {cfg.out}")
    return EXIT_OK


def cmd_build_graph(args) -> int:
    if not os.path.exists(args.labels):
        raise ConfigError(f"labels file not found: {args.labels}")
    try:
        labels = np.loadtxt(args.labels, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"malformed labels file: {exc}") from exc
    if args.split:
        with open(args.split) as fh:
            split = np.array([line.strip() for line in fh if line.strip()])
        if len(split) != len(labels):
            raise DataError("split file and labels disagree on row count")
        labels = labels[split == "train"]
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0/1")
    graph = build_graph(args.policy, args.param, labels=labels.astype(int), seed=args.seed)
    if args.out:
        save_graph(graph, args.out)
    stats = graph_stats(graph).as_dict()
    emit({"command": "build-graph", "policy": args.policy, "param": args.param, **stats,
          "sha256": graph.sha256(), "out": args.out})
    human(f"{args.policy} graph: {stats['n_pairwise']} pairwise factors over {stats['n_vars']} attributes")
    return EXIT_OK


def _dataset(cfg: ExperimentConfig):
    cfg.require_files("data_dir")
    return load_dataset_dir(cfg.data_dir)


def cmd_train(args) -> int:
    cfg = load_config(args)
    ds = _dataset(cfg)
    graph = None
    if cfg.model != "sigmoid":
        if cfg.graph is None:
            raise ConfigError(f"model {cfg.model} needs --graph FILE")
        cfg.require_files("graph")
        graph = load_graph(cfg.graph)
        if graph.n_vars != ds.n_attrs:
            raise ConfigError(f"graph has {graph.n_vars} variables but the data has {ds.n_attrs} attributes")
    model = init_model(cfg.model, ds.n_attrs, ds.n_features, graph=graph, inference=cfg.inference(),
                       seed=cfg.seed, zero=args.zero_init, hidden_units=cfg.hidden_units)
    start = time.perf_counter()
    model, history = train(model, ds, cfg.schedule(), threads=cfg.threads)
    seconds = time.perf_counter() - start
    out = cfg.out or "model.json"
    save_model(model, out)
    if args.history:
        write_history_csv(args.history, history)
    best = max(history, key=lambda r: (r.val_accuracy, -r.epoch)) if history else None
    emit({"command": "train", "model": cfg.model, "iterations": cfg.iterations, "sharing": cfg.sharing,
          "epochs": cfg.epochs, "best_epoch": best.epoch if best else 0,
          "best_val_accuracy": best.val_accuracy if best else None, "checkpoint": out})
    human(f"trained {cfg.model} for {cfg.epochs} epochs in {seconds:.1f}s; checkpoint {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args)
    cfg.require_files("checkpoint")
    ds = _dataset(cfg)
    model = load_model(cfg.checkpoint)
    if cfg.graph is not None:
        cfg.require_files("graph")
        if load_graph(cfg.graph).sha256() != (model.graph.sha256() if model.graph else None):
            raise ConfigError("checkpoint was trained against a different graph")
    for split in args.splits:
        report = evaluate(model, ds, split, threads=cfg.threads)
        emit({"command": "eval", "split": split, "model": model.kind, **report.summary()})
        human(f"{split}: acc {report.accuracy:.4f}  pre {report.avg_precision:.4f}  "
              f"rec {report.avg_recall:.4f}  F1 {report.avg_f1:.4f}")
    if args.marginals:
        z, _ = ds.part(args.splits[0])
        write_marginals_csv(args.marginals, predict(model, z, threads=cfg.threads))
    return EXIT_OK


def cmd_check(args) -> int:
    results = checks.run_all(seed=args.seed)
    for r in results:
        emit(r.as_dict())
        human(f"{'PASS' if r.passed else 'FAIL'} {r.name}: max error {r.max_error:.3e} (tol {r.tolerance:g})")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def bench_rows(n_vars: int, pair_counts, iterations: int, reps: int, batch: int, seed: int,
               n_features: int = 16, features=None):
    """Median inference and end-to-end prediction time per pairwise-factor count."""
    rng = np.random.default_rng(seed)
    if features is None:
        features = rng.normal(size=(batch, n_features))
    z = np.asarray(features, dtype=float)[:batch]
    config = InferenceConfig(iterations=iterations)
    rows = []
    for count in pair_counts:
        graph = build_graph("rand", count, n_vars=n_vars, seed=seed)
        tables = [TableSet(rng.uniform(0.1, 3.0, (len(z), n_vars, 2)), rng.uniform(0.1, 3.0, (len(z), count, 4)))]
        model = init_model("linear_crf", n_vars, z.shape[1], graph=graph, inference=config, seed=seed)
        run_sum_product(graph, tables, config)  # warm-up: layout cache, allocator
        predict(model, z)
        infer, e2e = [], []
        for _ in range(reps):
            t0 = time.perf_counter()
            run_sum_product(graph, tables, config)
            t1 = time.perf_counter()
            predict(model, z)
            t2 = time.perf_counter()
            infer.append(t1 - t0)
            e2e.append(t2 - t1)
        med, med_e2e = float(np.median(infer)), float(np.median(e2e))
        rows.append({"n_pairwise": count, "iterations": iterations, "median_seconds": med,
                     "per_sample_seconds": med / len(z), "predict_per_sample_seconds": med_e2e / len(z)})
    return rows


BENCH_COLUMNS = ("n_pairwise", "iterations", "median_seconds", "per_sample_seconds", "predict_per_sample_seconds")


def write_bench_csv(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) for c in BENCH_COLUMNS) + "\n")


def read_bench_csv(path) -> list[dict]:
    with open(path) as fh:
        header, *lines = fh.read().splitlines()
    cols = header.split(",")
    return [{c: (int(v) if c in ("n_pairwise", "iterations") else float(v)) for c, v in zip(cols, line.split(","))}
            for line in lines]


def cmd_bench(args) -> int:
    if args.reps < 5:
        raise ConfigError("bench needs at least 5 repetitions")
    pair_counts = [int(x) for x in args.pairs.split(",")]
    max_pairs = args.n_vars * (args.n_vars - 1) // 2
    if any(c < 0 or c > max_pairs for c in pair_counts):
        raise ConfigError(f"pair counts must lie in [0, {max_pairs}]")
    features = None
    if args.data_dir:
        features = load_dataset_dir(args.data_dir).features
    rows = []
    for t in args.iterations:
        rows += bench_rows(args.n_vars, pair_counts, t, args.reps, args.batch, args.seed, features=features)
    if args.out:
        write_bench_csv(args.out, rows)
    for r in rows:
        emit({"command": "bench", **r})
        human(f"T={r['iterations']} pairs={r['n_pairwise']:4d}  {r['per_sample_seconds'] * 1e3:.3f} ms/sample inference, "
              f"{r['predict_per_sample_seconds'] * 1e3:.3f} ms/sample end-to-end")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser, names) -> None:
    """Flags default to None so that only explicitly given values override the config file."""
    spec = {
        "model": dict(choices=MODEL_KINDS), "iterations": dict(type=int), "sharing": dict(choices=("shared", "independent")),
        "epsilon": dict(type=float), "hidden_units": dict(type=int), "epochs": dict(type=int),
        "batch_size": dict(type=int), "learning_rate": dict(type=float), "momentum": dict(type=float),
        "weight_decay": dict(type=float), "n_attrs": dict(type=int), "n_features": dict(type=int),
        "n_samples": dict(type=int), "coupling_strength": dict(type=float), "noise": dict(type=float),
        "n_hidden": dict(type=int), "n_motifs": dict(type=int), "seed": dict(type=int), "data_seed": dict(type=int),
        "data_dir": dict(), "graph": dict(), "checkpoint": dict(), "out": dict(), "threads": dict(type=int),
    }
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **spec[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attrcrf", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample a synthetic dataset")
    p.add_argument("--config")
    _add_config_flags(p, ["n_attrs", "n_features", "n_samples", "coupling_strength", "noise", "n_hidden", "n_motifs", "out"])
    p.add_argument("--seed", dest="data_seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("build-graph", help="build a factor graph from training labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--split", help="optional split file; only train rows are used")
    p.add_argument("--policy", choices=POLICIES, required=True)
    p.add_argument("--param", type=int, required=True, help="K for min, number of pairs for rand/top")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config")
    _add_config_flags(p, ["model", "graph", "iterations", "sharing", "epsilon", "hidden_units", "epochs",
                          "batch_size", "learning_rate", "momentum", "weight_decay", "seed", "data_dir",
                          "out", "threads"])
    p.add_argument("--history", help="write per-epoch history CSV here")
    p.add_argument("--zero-init", action="store_true", help="start from all-zero parameters")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--config")
    _add_config_flags(p, ["checkpoint", "data_dir", "graph", "threads"])
    p.add_argument("--splits", nargs="+", default=["test"], choices=("train", "val", "test"))
    p.add_argument("--marginals", help="write marginals of the first split as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run oracle agreement and gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="time inference against the number of pairwise factors")
    p.add_argument("--n-vars", type=int, default=102)
    p.add_argument("--pairs", default="0,100,200,300,400,500,600,700,800,900")
    p.add_argument("--iterations", type=int, nargs="+", default=[2])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", help="take feature rows from this dataset instead of random ones")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except DivergenceError as exc:
        human(f"error: {exc}")
        return EXIT_NUMERIC
    except INPUT_ERRORS as exc:
        human(f"error: {exc}")
        return EXIT_CONFIG
    except ValueError as exc:
        human(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
