"""Unrolled flooding-schedule sum-product on binary factor graphs.

Messages live in the linear domain. Every variable-to-factor message and
every marginal is normalized to sum 1; a 2-vector whose sum falls below
``epsilon`` is replaced by the uniform message and treated as a constant
by the backward pass.

All routines accept a leading batch axis. Edge layout for a graph with N
variables and P pairwise factors (E = N + 2P edges):

* edge ``k < N``       -- unary factor k  <-> variable k
* edge ``N + 2p``      -- pairwise factor p <-> its first variable
* edge ``N + 2p + 1``  -- pairwise factor p <-> its second variable
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .graph import FactorGraph

SHARING_MODES = ("shared", "independent")


class InferenceError(ValueError):
    pass


@dataclass(frozen=True)
class InferenceConfig:
    iterations: int = 2
    epsilon: float = 1e-12
    sharing: str = "shared"

    def __post_init__(self):
        if self.iterations < 1:
            raise InferenceError("iterations must be >= 1")
        if not (0 < self.epsilon <= 1e-3):
            raise InferenceError("epsilon must lie in (0, 1e-3]")
        if self.sharing not in SHARING_MODES:
            raise InferenceError(f"sharing must be one of {SHARING_MODES}")

    @property
    def n_table_sets(self) -> int:
        return 1 if self.sharing == "shared" else self.iterations


@dataclass
class TableSet:
    """Potential tables for every factor: unary (..., N, 2), pairwise (..., P, 4)."""

    unary: np.ndarray
    pairwise: np.ndarray

    def __post_init__(self):
        self.unary = np.asarray(self.unary, dtype=float)
        self.pairwise = np.asarray(self.pairwise, dtype=float)

    def check(self, graph: FactorGraph) -> None:
        if self.unary.shape[-2:] != (graph.n_vars, 2):
            raise InferenceError(f"unary tables have shape {self.unary.shape}, expected (..., {graph.n_vars}, 2)")
        if self.pairwise.shape[-2:] != (graph.n_pairwise, 4):
            raise InferenceError(
                f"pairwise tables have shape {self.pairwise.shape}, expected (..., {graph.n_pairwise}, 4)")
        if self.unary.shape[:-2] != self.pairwise.shape[:-2]:
            raise InferenceError("unary and pairwise tables disagree on batch shape")

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.unary.shape[:-2]


@dataclass
class MessageState:
    """f2v and v2f messages, each (..., E, 2)."""

    f2v: np.ndarray
    v2f: np.ndarray


@dataclass(frozen=True)
class _Layout:
    n_vars: int
    n_pairs: int
    n_edges: int
    edge_var: np.ndarray  # (E,)
    edge_slot: np.ndarray  # (E,)
    slots: np.ndarray  # (N, S), padded with n_edges


@lru_cache(maxsize=64)
def _layout(graph: FactorGraph) -> _Layout:
    n, p = graph.n_vars, graph.n_pairwise
    e = n + 2 * p
    edge_var = np.empty(e, dtype=np.intp)
    edge_slot = np.empty(e, dtype=np.intp)
    incoming: list[list[int]] = [[k] for k in range(n)]
    edge_var[:n] = np.arange(n)
    edge_slot[:n] = 0
    for q, (i, j) in enumerate(graph.pairs):
        for side, v in enumerate((i, j)):
            edge = n + 2 * q + side
            edge_var[edge] = v
            edge_slot[edge] = len(incoming[v])
            incoming[v].append(edge)
    width = max(len(x) for x in incoming)
    slots = np.full((n, width), e, dtype=np.intp)
    for v, edges in enumerate(incoming):
        slots[v, : len(edges)] = edges
    return _Layout(n, p, e, edge_var, edge_slot, slots)


# --- primitive ops and their vector-Jacobian products --------------------------


def _normalize(q, eps):
    s = q.sum(axis=-1, keepdims=True)
    floored = s < eps
    out = np.where(floored, 0.5, q / np.where(floored, 1.0, s))
    return out, s, floored


def _normalize_vjp(g, out, s, floored):
    g_q = (g - (g * out).sum(axis=-1, keepdims=True)) / np.where(floored, 1.0, s)
    return np.where(floored, 0.0, g_q)


# Division shortcut is exact to rounding while no factor or product is near underflow.
_SAFE_FACTOR = 1e-100
_SAFE_PRODUCT = 1e-250


def _exclusive_products_exact(g):
    ones = np.ones_like(g[..., :1, :])
    pre = np.cumprod(np.concatenate([ones, g[..., :-1, :]], axis=-2), axis=-2)
    suf = np.cumprod(np.concatenate([ones, g[..., :0:-1, :]], axis=-2), axis=-2)[..., ::-1, :]
    return pre * suf


def _exclusive_products(g):
    """out[..., k, :] = prod over l != k of g[..., l, :] (axis -2)."""
    if g.min() >= _SAFE_FACTOR:
        full = np.prod(g, axis=-2, keepdims=True)
        if full.min() >= _SAFE_PRODUCT:
            return full / g
    return _exclusive_products_exact(g)


def _exclusive_products_vjp(g, upstream, excl):
    """Gradient of sum_k upstream[k] * excl[k] w.r.t. g, where excl = _exclusive_products(g)."""
    if g.min() >= _SAFE_FACTOR and excl.min() >= _SAFE_PRODUCT:
        weighted = upstream * excl
        return (weighted.sum(axis=-2, keepdims=True) - weighted) / g
    # d out[k] / d g[j] = prod over l not in {j, k}; build that for all (j, k) at once.
    width = g.shape[-2]
    idx = np.arange(width)
    g2 = np.repeat(g[..., None, :, :], width, axis=-3)
    g2[..., idx, idx, :] = 1.0
    contrib = upstream[..., None, :, :] * _exclusive_products_exact(g2)
    contrib[..., idx, idx, :] = 0.0
    return contrib.sum(axis=-2)


def _pairwise_f2v(pair, va, vb):
    """pair (B, P, 2, 2) indexed [x_first, x_second]; returns messages to first and second."""
    to_first = pair[..., 0] * vb[..., None, 0] + pair[..., 1] * vb[..., None, 1]
    to_second = pair[..., 0, :] * va[..., 0, None] + pair[..., 1, :] * va[..., 1, None]
    return to_first, to_second


# --- single-step API -----------------------------------------------------------


def _flatten(tables: TableSet, graph: FactorGraph):
    tables.check(graph)
    batch = tables.batch_shape
    b = int(np.prod(batch)) if batch else 1
    unary = tables.unary.reshape(b, graph.n_vars, 2)
    pair = tables.pairwise.reshape(b, graph.n_pairwise, 2, 2)
    return batch, unary, pair


def init_messages(graph: FactorGraph, batch_shape: tuple[int, ...] = ()) -> MessageState:
    shape = tuple(batch_shape) + (graph.n_edges, 2)
    f2v = np.ones(shape)
    # one application of the v2f rule to all-ones messages gives the uniform message
    return MessageState(f2v=f2v, v2f=np.full(shape, 0.5))


def _f2v(lay: _Layout, unary, pair, v2f):
    b = unary.shape[0]
    n, e = lay.n_vars, lay.n_edges
    f2v = np.empty((b, e + 1, 2))
    f2v[:, e] = 1.0
    f2v[:, :n] = unary
    to_first, to_second = _pairwise_f2v(pair, v2f[:, n::2], v2f[:, n + 1::2])
    f2v[:, n:e:2] = to_first
    f2v[:, n + 1:e:2] = to_second
    return f2v


def step_factor_to_variable(graph: FactorGraph, tables: TableSet, state: MessageState) -> MessageState:
    """One flooding update of every factor-to-variable message from the previous v2f."""
    lay = _layout(graph)
    batch, unary, pair = _flatten(tables, graph)
    v2f = np.broadcast_to(state.v2f, batch + (lay.n_edges, 2)).reshape(-1, lay.n_edges, 2)
    f2v = _f2v(lay, unary, pair, v2f)[:, :-1]
    return MessageState(f2v=f2v.reshape(batch + (lay.n_edges, 2)), v2f=state.v2f)


def _gather(lay: _Layout, f2v):
    if f2v.shape[1] == lay.n_edges:
        f2v = np.concatenate([f2v, np.ones_like(f2v[:, :1])], axis=1)
    return f2v[:, lay.slots]


def step_variable_to_factor(graph: FactorGraph, state: MessageState, epsilon: float = 1e-12) -> MessageState:
    """Each v2f message is the normalized product of the other incoming f2v messages."""
    lay = _layout(graph)
    batch = state.f2v.shape[:-2]
    f2v = state.f2v.reshape(-1, lay.n_edges, 2)
    excl = _exclusive_products(_gather(lay, f2v))
    v2f, _, _ = _normalize(excl[:, lay.edge_var, lay.edge_slot], epsilon)
    return MessageState(f2v=state.f2v, v2f=v2f.reshape(batch + (lay.n_edges, 2)))


def read_marginals(graph: FactorGraph, state: MessageState, epsilon: float = 1e-12) -> np.ndarray:
    """p(x_i = 1) from the normalized product of all f2v messages into each variable."""
    lay = _layout(graph)
    batch = state.f2v.shape[:-2]
    g = _gather(lay, state.f2v.reshape(-1, lay.n_edges, 2))
    marg, _, _ = _normalize(np.prod(g, axis=-2), epsilon)
    return marg[..., 1].reshape(batch + (lay.n_vars,))


# --- unrolled forward/backward ----------------------------------------------------


@dataclass
class _Round:
    table_index: int
    v2f_prev: np.ndarray
    gathered: np.ndarray
    excl: np.ndarray
    v2f: np.ndarray
    v2f_sum: np.ndarray
    v2f_floored: np.ndarray


@dataclass
class Tape:
    graph: FactorGraph
    config: InferenceConfig
    batch_shape: tuple[int, ...]
    pair_tables: list  # per table set, (B, P, 2, 2)
    rounds: list[_Round] = field(default_factory=list)
    marginal: np.ndarray | None = None
    marginal_sum: np.ndarray | None = None
    marginal_floored: np.ndarray | None = None


def _check_table_sets(graph, tables_per_iteration, config):
    if isinstance(tables_per_iteration, TableSet):
        tables_per_iteration = [tables_per_iteration]
    tables_per_iteration = list(tables_per_iteration)
    if len(tables_per_iteration) != config.n_table_sets:
        raise InferenceError(
            f"{config.sharing} mode with T={config.iterations} needs {config.n_table_sets} table set(s), "
            f"got {len(tables_per_iteration)}")
    return tables_per_iteration


def run_sum_product(graph: FactorGraph, tables_per_iteration, config: InferenceConfig):
    """Run T flooding rounds and read marginals.

    ``tables_per_iteration`` is one TableSet (shared) or a list of T sets
    (independent; round t uses set t). Returns ``(p, tape)`` with ``p`` of
    shape ``batch + (N,)``.
    """
    sets = _check_table_sets(graph, tables_per_iteration, config)
    lay = _layout(graph)
    flat = [_flatten(ts, graph) for ts in sets]
    batch = flat[0][0]
    if any(f[0] != batch for f in flat):
        raise InferenceError("table sets disagree on batch shape")
    b = flat[0][1].shape[0]
    tape = Tape(graph, config, batch, [f[2] for f in flat])

    v2f = np.full((b, lay.n_edges, 2), 0.5)
    gathered = excl = None
    for t in range(config.iterations):
        k = t if config.sharing == "independent" else 0
        _, unary, pair = flat[k]
        f2v = _f2v(lay, unary, pair, v2f)
        gathered = f2v[:, lay.slots]
        excl = _exclusive_products(gathered)
        new_v2f, s, floored = _normalize(excl[:, lay.edge_var, lay.edge_slot], config.epsilon)
        tape.rounds.append(_Round(k, v2f, gathered, excl, new_v2f, s, floored))
        v2f = new_v2f

    marg, s, floored = _normalize(np.prod(gathered, axis=-2), config.epsilon)
    tape.marginal, tape.marginal_sum, tape.marginal_floored = marg, s, floored
    return marg[..., 1].reshape(batch + (lay.n_vars,)), tape


def backward_sum_product(tape: Tape, grad_marginals) -> list[TableSet]:
    """Reverse-mode gradient of a scalar loss w.r.t. every table entry.

    ``grad_marginals`` is dL/dp with the shape of the forward output.
    Returns one TableSet per table set (batched like the forward input).
    """
    graph, config = tape.graph, tape.config
    lay = _layout(graph)
    n, e = lay.n_vars, lay.n_edges
    g_p = np.asarray(grad_marginals, dtype=float)
    if tape.marginal is None or g_p.shape != tape.batch_shape + (n,):
        raise InferenceError(f"gradient shape {g_p.shape} does not match tape output {tape.batch_shape + (n,)}")
    b = tape.marginal.shape[0]
    g_p = g_p.reshape(b, n)

    n_sets = config.n_table_sets
    g_unary = [np.zeros((b, n, 2)) for _ in range(n_sets)]
    g_pair = [np.zeros((b, lay.n_pairs, 2, 2)) for _ in range(n_sets)]

    g_marg = np.zeros((b, n, 2))
    g_marg[..., 1] = g_p
    g_full = _normalize_vjp(g_marg, tape.marginal, tape.marginal_sum, tape.marginal_floored)
    last = tape.rounds[-1]
    g_gathered = g_full[:, :, None, :] * last.excl

    g_v2f = np.zeros((b, e, 2))  # gradient w.r.t. v2f of the current round
    for rnd in reversed(tape.rounds):
        g_raw = _normalize_vjp(g_v2f, rnd.v2f, rnd.v2f_sum, rnd.v2f_floored)
        g_excl = np.zeros_like(rnd.excl)
        g_excl[:, lay.edge_var, lay.edge_slot] = g_raw
        g_gathered = g_gathered + _exclusive_products_vjp(rnd.gathered, g_excl, rnd.excl)
        # every real edge appears exactly once in the slot table
        g_f2v = g_gathered[:, lay.edge_var, lay.edge_slot]

        k = rnd.table_index
        pair = tape.pair_tables[k]
        va, vb = rnd.v2f_prev[:, n::2], rnd.v2f_prev[:, n + 1::2]
        g_first, g_second = g_f2v[:, n::2], g_f2v[:, n + 1::2]
        g_unary[k] += g_f2v[:, :n]
        g_pair[k] += g_first[:, :, :, None] * vb[:, :, None, :] + va[:, :, :, None] * g_second[:, :, None, :]
        g_v2f = np.zeros((b, e, 2))
        # the f2v map is linear in v2f: transpose its role
        g_v2f[:, n::2], g_v2f[:, n + 1::2] = _pairwise_f2v(pair, g_first, g_second)
        g_gathered = 0.0

    batch = tape.batch_shape
    return [
        TableSet(gu.reshape(batch + (n, 2)), gp.reshape(batch + (lay.n_pairs, 4)))
        for gu, gp in zip(g_unary, g_pair)
    ]


def sum_product_marginals(graph: FactorGraph, tables_per_iteration, config: InferenceConfig | None = None):
    """Forward pass only."""
    config = config or InferenceConfig()
    p, _ = run_sum_product(graph, tables_per_iteration, config)
    return p


def write_marginals_csv(path, p) -> None:
    """One row per sample, N columns of p(x_i = 1), 9 significant digits."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    with open(path, "w") as fh:
        for row in p:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


def read_marginals_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
