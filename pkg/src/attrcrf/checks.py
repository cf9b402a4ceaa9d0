"""Self-checks comparing the model code against the reference engines.

Each suite returns a :class:`CheckResult` with the worst error it saw. The
``check`` CLI command runs all of them; the test-suite also calls them
directly (and patches internals to make sure a broken backward pass is caught).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import trainer
from .graph import FactorGraph, build_graph_rand, graph_stats, random_tree
from .inference import InferenceConfig, TableSet, run_sum_product
from .oracle import exact_marginals, finite_diff


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    cases: int
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error < self.tolerance)

    def as_dict(self) -> dict:
        return {"check": self.name, "passed": self.passed, "max_error": self.max_error,
                "tolerance": self.tolerance, "cases": self.cases, "seconds": round(self.seconds, 3)}


def random_tables(graph: FactorGraph, rng: np.random.Generator, low: float = 0.1, high: float = 3.0) -> TableSet:
    return TableSet(rng.uniform(low, high, (graph.n_vars, 2)), rng.uniform(low, high, (graph.n_pairwise, 4)))


def tree_exactness(n_trees: int = 20, max_vars: int = 10, extra_rounds: int = 1, seed: int = 0,
                   tolerance: float = 1e-9) -> CheckResult:
    """Sum-product on random trees vs. enumeration, run for ``diameter + extra_rounds`` rounds.

    Flooding from the all-ones start needs one round more than the diameter
    before evidence from one end of the longest path reaches the other end,
    so ``extra_rounds=1`` is the smallest setting that is exact.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_trees):
        n = int(rng.integers(2, max_vars + 1))
        graph = random_tree(n, seed=seed * 1000 + k)
        tables = random_tables(graph, rng)
        rounds = max(1, graph_stats(graph).diameter + extra_rounds)
        p, _ = run_sum_product(graph, [tables], InferenceConfig(iterations=rounds))
        worst = max(worst, float(np.abs(p - exact_marginals(graph, tables)).max()))
    return CheckResult("tree_exactness", worst, tolerance, n_trees, time.perf_counter() - start)


def uniform_pairwise(n_graphs: int = 10, max_vars: int = 10, seed: int = 0, tolerance: float = 1e-12) -> CheckResult:
    """Constant pairwise tables must leave the unary-only marginals untouched."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_graphs):
        n = int(rng.integers(2, max_vars + 1))
        graph = build_graph_rand(n, int(rng.integers(0, n * (n - 1) // 2 + 1)), seed=seed * 1000 + k)
        unary = rng.uniform(0.1, 3.0, (n, 2))
        pairwise = np.repeat(rng.uniform(0.1, 3.0, (graph.n_pairwise, 1)), 4, axis=1)
        config = InferenceConfig(iterations=int(rng.integers(1, 6)))
        p, _ = run_sum_product(graph, [TableSet(unary, pairwise)], config)
        bare = FactorGraph(n, ())
        q, _ = run_sum_product(bare, [TableSet(unary, np.zeros((0, 4)))], config)
        worst = max(worst, float(np.abs(p - q).max()))
    return CheckResult("uniform_pairwise", worst, tolerance, n_graphs, time.perf_counter() - start)


def _relative_errors(analytic, numeric, floor: float) -> np.ndarray:
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return np.where(diff <= floor, 0.0, diff / np.maximum(scale, floor))


def gradient_check(n_configs: int = 10, n_vars: int = 5, n_features: int = 8, iterations: int = 2,
                   kind: str = "linear_crf", batch: int = 3, seed: int = 0, step: float = 1e-5,
                   tolerance: float = 1e-4, floor: float = 1e-8) -> CheckResult:
    """Analytic BCE gradients (every parameter and the inputs) vs. central differences."""
    start = time.perf_counter()
    worst = 0.0
    max_pairs = n_vars * (n_vars - 1) // 2
    for k in range(n_configs):
        rng = np.random.default_rng(seed * 1000 + k)
        graph = build_graph_rand(n_vars, int(rng.integers(1, max_pairs + 1)), seed=seed * 1000 + k)
        sharing = "independent" if k % 2 else "shared"
        model = trainer.init_model(kind, n_vars, n_features, graph=None if kind == "sigmoid" else graph,
                                   seed=seed * 1000 + k,
                                   inference=InferenceConfig(iterations=iterations, sharing=sharing))
        for name in model.params:  # move biases off zero so every path is exercised
            model.params[name] = model.params[name] + rng.normal(0, 0.5, model.params[name].shape)
        z = rng.normal(size=(batch, n_features))
        y = rng.integers(0, 2, size=(batch, n_vars))
        _, grads, g_z = trainer.loss_and_grad(model, z, y, input_grad=True)
        for name, theta in model.params.items():
            def loss(value, name=name):
                probe = model.copy()
                probe.params[name] = value
                return trainer.bce_loss(trainer.predict(probe, z), y)
            numeric = finite_diff(loss, theta, step)
            worst = max(worst, float(_relative_errors(grads[name], numeric, floor).max(initial=0.0)))
        numeric_z = finite_diff(lambda value: trainer.bce_loss(trainer.predict(model, value), y), z, step)
        worst = max(worst, float(_relative_errors(g_z, numeric_z, floor).max(initial=0.0)))
    return CheckResult(f"gradient_{kind}", worst, tolerance, n_configs, time.perf_counter() - start)


def run_all(seed: int = 0) -> list[CheckResult]:
    return [
        tree_exactness(seed=seed),
        uniform_pairwise(seed=seed),
        gradient_check(kind="linear_crf", seed=seed),
        gradient_check(kind="const_crf", n_configs=4, seed=seed),
        gradient_check(kind="sigmoid", n_configs=2, seed=seed),
    ]
