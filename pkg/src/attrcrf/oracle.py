"""Reference engines: brute-force enumeration, finite differences, Gibbs sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import FactorGraph
from .inference import TableSet

MAX_ENUM_VARS = 20


class OracleError(ValueError):
    pass


@dataclass
class JointTable:
    """Unnormalized joint masses over 2^N assignments; bit k of the index is x_k."""

    n_vars: int
    masses: np.ndarray
    partition: float


def assignments(n_vars: int) -> np.ndarray:
    idx = np.arange(2 ** n_vars)
    return (idx[:, None] >> np.arange(n_vars)) & 1


def joint_table(graph: FactorGraph, tables: TableSet) -> JointTable:
    n = graph.n_vars
    if n > MAX_ENUM_VARS:
        raise OracleError(f"enumeration limited to {MAX_ENUM_VARS} variables, got {n}")
    tables.check(graph)
    if tables.batch_shape:
        raise OracleError("joint_table expects unbatched tables")
    if (tables.unary <= 0).any() or (tables.pairwise <= 0).any():
        raise OracleError("tables must be strictly positive")
    bits = assignments(n)
    masses = np.ones(len(bits))
    for k in range(n):
        masses *= tables.unary[k, bits[:, k]]
    for q, (i, j) in enumerate(graph.pairs):
        masses *= tables.pairwise[q, 2 * bits[:, i] + bits[:, j]]
    return JointTable(n, masses, math.fsum(masses))


def exact_marginals(graph: FactorGraph, tables: TableSet) -> np.ndarray:
    """p(x_i = 1) by summing the joint over all other variables."""
    joint = joint_table(graph, tables)
    bits = assignments(graph.n_vars).astype(bool)
    return np.array([math.fsum(joint.masses[bits[:, k]]) / joint.partition for k in range(graph.n_vars)])


def finite_diff(loss_fn, params, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    if not (1e-7 <= step <= 1e-3):
        raise OracleError("step must lie in [1e-7, 1e-3]")
    theta = np.array(params, dtype=float)
    grad = np.zeros_like(theta)
    flat, gflat = theta.reshape(-1), grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        f_plus = loss_fn(theta.copy())
        flat[k] = orig - step
        f_minus = loss_fn(theta.copy())
        flat[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise OracleError(f"non-finite loss at coordinate {k}")
        gflat[k] = (f_plus - f_minus) / (2 * step)
    return grad


def _conditional_fn(graph: FactorGraph | None, tables: TableSet | None, joint: JointTable | None):
    """Return f(state, k) -> p(x_k = 1 | rest) for a batch of chains."""
    if joint is not None:
        if (joint.masses <= 0).any():
            raise OracleError("zero-mass configuration: chain would not be irreducible")
        weights = 1 << np.arange(joint.n_vars)

        def cond(state, k):
            idx = state @ weights
            on = joint.masses[idx | (1 << k)]
            off = joint.masses[idx & ~(1 << k)]
            return on / (on + off)

        return joint.n_vars, cond

    tables.check(graph)
    if (tables.unary <= 0).any() or (tables.pairwise <= 0).any():
        raise OracleError("zero-mass configuration: tables must be strictly positive")
    log_u = np.log(tables.unary)
    log_p = np.log(tables.pairwise).reshape(-1, 2, 2)
    touching = [[] for _ in range(graph.n_vars)]
    for q, (i, j) in enumerate(graph.pairs):
        touching[i].append((q, j, 0))
        touching[j].append((q, i, 1))

    def cond(state, k):
        score = np.full(len(state), log_u[k, 1] - log_u[k, 0])
        for q, other, side in touching[k]:
            xo = state[:, other]
            if side == 0:
                score += log_p[q, 1, xo] - log_p[q, 0, xo]
            else:
                score += log_p[q, xo, 1] - log_p[q, xo, 0]
        return 1.0 / (1.0 + np.exp(-score))

    return graph.n_vars, cond


def gibbs_sample(graph: FactorGraph | None = None, tables: TableSet | None = None, n_samples: int = 1000,
                 burn_in: int = 100, seed: int = 0, *, joint: JointTable | None = None,
                 n_chains: int | None = None, thin: int = 1) -> np.ndarray:
    """Systematic-scan Gibbs sampling with parallel chains.

    Chains start from uniform random states, run ``burn_in`` sweeps, then
    emit one sample per chain every ``thin`` sweeps until ``n_samples`` rows
    are collected. Pass either ``graph`` + ``tables`` or ``joint``.
    """
    if joint is None and (graph is None or tables is None):
        raise OracleError("need graph and tables, or a joint table")
    n_vars, cond = _conditional_fn(graph, tables, joint)
    rng = np.random.default_rng(seed)
    n_chains = n_chains or min(n_samples, 512)
    state = rng.integers(0, 2, size=(n_chains, n_vars))

    def sweep():
        for k in range(n_vars):
            state[:, k] = rng.random(n_chains) < cond(state, k)

    for _ in range(burn_in):
        sweep()
    out = np.empty((n_samples, n_vars), dtype=np.int64)
    filled = 0
    while filled < n_samples:
        for _ in range(thin):
            sweep()
        take = min(n_chains, n_samples - filled)
        out[filled:filled + take] = state[:take]
        filled += take
    return out
