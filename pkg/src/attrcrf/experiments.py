"""Seed-averaged model comparisons on synthetic data.

Used by the scripts in ``scripts/`` and by the acceptance tests. Each
:class:`Variant` names a model kind, a graph policy, a propagation depth and
a sharing mode; :func:`compare` trains every variant on the same datasets
and reports test-set macro-F1 per seed.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import generate_synthetic
from .graph import FactorGraph, build_graph_min, build_graph_rand, build_graph_top, compute_correlation
from .inference import InferenceConfig
from .trainer import TrainSchedule, evaluate, init_model, train

log = logging.getLogger(__name__)

# Synthetic setup used by the comparisons: 12 attributes, 16 feature
# dimensions, 6000 samples, four planted hidden/confounded triples (see
# :func:`attrcrf.data.generate_synthetic`).
SETUP = dict(n_attrs=12, n_features=16, n_samples=6000, coupling_strength=1.5, noise=0.3, n_hidden=4, n_motifs=4)
MIN_K = 2

# Step sizes differ per kind: the sigmoid baseline is a convex problem and
# tolerates a larger step; message passing makes the CRF losses stiffer.
SIGMOID_SCHEDULE = TrainSchedule(epochs=60, batch_size=32, learning_rate=1.0)
CRF_SCHEDULE = TrainSchedule(epochs=60, batch_size=32, learning_rate=0.3)


@dataclass(frozen=True)
class Variant:
    name: str
    kind: str
    policy: str = "min"  # min | top | rand | truth; top and rand match the min graph's factor count
    iterations: int = 2
    sharing: str = "shared"
    schedule: TrainSchedule | None = None

    def resolved_schedule(self) -> TrainSchedule:
        if self.schedule is not None:
            return self.schedule
        return SIGMOID_SCHEDULE if self.kind == "sigmoid" else CRF_SCHEDULE


@dataclass
class Comparison:
    seeds: list[int]
    f1: dict[str, list[float]] = field(default_factory=dict)
    accuracy: dict[str, list[float]] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)

    def mean_f1(self, name: str) -> float:
        return float(np.mean(self.f1[name]))

    def table(self) -> str:
        width = max(len(n) for n in self.f1)
        lines = [f"{'variant':<{width}}  mean F1   per-seed F1"]
        for name, values in self.f1.items():
            per = " ".join(f"{v:.3f}" for v in values)
            lines.append(f"{name:<{width}}  {np.mean(values):.4f}    {per}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "seed", "avg_f1", "accuracy"])
            for name in self.f1:
                for seed, f1, acc in zip(self.seeds, self.f1[name], self.accuracy[name]):
                    w.writerow([name, seed, repr(f1), repr(acc)])


def graph_for(policy: str, labels, n_attrs: int, seed: int, k: int = MIN_K, truth: FactorGraph | None = None):
    corr = compute_correlation(labels)
    reference = build_graph_min(corr, k)
    if policy == "min":
        return reference
    if policy == "top":
        return build_graph_top(corr, reference.n_pairwise)
    if policy == "rand":
        return build_graph_rand(n_attrs, reference.n_pairwise, seed)
    if policy == "truth":
        if truth is None:
            raise ValueError("policy 'truth' needs the generating graph")
        return truth
    raise ValueError(f"unknown policy {policy!r}")


def compare(variants, seeds=range(5), setup: dict | None = None, k: int = MIN_K, threads: int = 1) -> Comparison:
    """Train every variant on the dataset of every seed; seed also drives init and shuffling."""
    setup = {**SETUP, **(setup or {})}
    result = Comparison(list(seeds))
    for seed in result.seeds:
        ds, truth = generate_synthetic(**setup, seed=seed)
        labels = ds.part("train")[1]
        for v in variants:
            start = time.perf_counter()
            graph = None if v.kind == "sigmoid" else graph_for(v.policy, labels, ds.n_attrs, seed, k, truth.graph)
            model = init_model(v.kind, ds.n_attrs, ds.n_features, graph=graph, seed=seed,
                               inference=InferenceConfig(iterations=v.iterations, sharing=v.sharing))
            schedule = v.resolved_schedule()
            schedule = TrainSchedule(**{**schedule.__dict__, "seed": seed})
            model, _ = train(model, ds, schedule, threads=threads)
            report = evaluate(model, ds, "test", threads=threads)
            result.f1.setdefault(v.name, []).append(report.avg_f1)
            result.accuracy.setdefault(v.name, []).append(report.accuracy)
            result.seconds[v.name] = result.seconds.get(v.name, 0.0) + time.perf_counter() - start
            log.info("seed %d %-16s F1 %.4f acc %.4f", seed, v.name, report.avg_f1, report.accuracy)
    return result


MODEL_VARIANTS = (
    Variant("sigmoid", "sigmoid"),
    Variant("const_crf", "const_crf"),
    Variant("linear_crf", "linear_crf"),
)

POLICY_VARIANTS = (
    Variant("min", "linear_crf", "min"),
    Variant("top", "linear_crf", "top"),
    Variant("rand", "linear_crf", "rand"),
)


def depth_variants(depths=(2, 8)):
    out = []
    for t in depths:
        out.append(Variant(f"shared_T{t}", "linear_crf", iterations=t, sharing="shared"))
        out.append(Variant(f"independent_T{t}", "linear_crf", iterations=t, sharing="independent"))
    return tuple(out)
