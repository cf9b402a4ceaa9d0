"""Factor graphs over binary attributes and sparse graph construction policies.

A graph holds one unary factor per variable plus a set of pairwise factors.
Factor ids are dense: factor ``k < n_vars`` is the unary factor of variable
``k`` and factor ``n_vars + p`` is the ``p``-th pairwise factor in ascending
lexicographic pair order.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

POLICIES = ("min", "rand", "top")


class GraphError(ValueError):
    """Raised for malformed graphs or out-of-range construction parameters."""


@dataclass(frozen=True)
class VariableNode:
    id: int
    name: str
    factor_neighbors: tuple[int, ...]


@dataclass(frozen=True)
class FactorNode:
    id: int
    scope: tuple[int, ...]

    @property
    def kind(self) -> str:
        return "unary" if len(self.scope) == 1 else "pairwise"


@dataclass(frozen=True)
class GraphStats:
    n_vars: int
    n_unary: int
    n_pairwise: int
    min_degree: int
    max_degree: int
    diameter: int  # largest finite shortest path, over all components
    disconnected: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=True)
class FactorGraph:
    """Immutable factor graph; pairs are stored sorted with ``i < j``."""

    n_vars: int
    pairs: tuple[tuple[int, int], ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_vars < 1:
            raise GraphError("a graph needs at least one variable")
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"attr_{k}" for k in range(self.n_vars)))
        elif len(self.names) != self.n_vars:
            raise GraphError(f"expected {self.n_vars} names, got {len(self.names)}")
        else:
            object.__setattr__(self, "names", tuple(str(s) for s in self.names))
        for i, j in pairs:
            if not (0 <= i < j < self.n_vars):
                raise GraphError(f"pair {(i, j)} must satisfy 0 <= i < j < {self.n_vars}")
        if list(pairs) != sorted(set(pairs)):
            raise GraphError("pairs must be unique and sorted lexicographically")

    @classmethod
    def from_pairs(cls, n_vars: int, pairs: Iterable[Sequence[int]], names: Sequence[str] = ()) -> "FactorGraph":
        """Canonicalize arbitrary pair input (orientation, order) and build a graph."""
        canon = set()
        for i, j in pairs:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-pair ({i}, {j}) is not allowed")
            canon.add((min(i, j), max(i, j)))
        return cls(n_vars, tuple(sorted(canon)), tuple(names))

    @property
    def n_pairwise(self) -> int:
        return len(self.pairs)

    @property
    def n_factors(self) -> int:
        return self.n_vars + len(self.pairs)

    @property
    def n_edges(self) -> int:
        return self.n_vars + 2 * len(self.pairs)

    @cached_property
    def factors(self) -> tuple[FactorNode, ...]:
        unary = [FactorNode(k, (k,)) for k in range(self.n_vars)]
        pairwise = [FactorNode(self.n_vars + p, pair) for p, pair in enumerate(self.pairs)]
        return tuple(unary + pairwise)

    @cached_property
    def variables(self) -> tuple[VariableNode, ...]:
        nbrs: list[list[int]] = [[k] for k in range(self.n_vars)]
        for p, (i, j) in enumerate(self.pairs):
            nbrs[i].append(self.n_vars + p)
            nbrs[j].append(self.n_vars + p)
        return tuple(VariableNode(k, self.names[k], tuple(nbrs[k])) for k in range(self.n_vars))

    @cached_property
    def pairwise_degree(self) -> np.ndarray:
        deg = np.zeros(self.n_vars, dtype=int)
        for i, j in self.pairs:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_vars)]
        for i, j in self.pairs:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def to_dict(self) -> dict:
        return {"n_vars": self.n_vars, "names": list(self.names), "pairs": [list(p) for p in self.pairs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "FactorGraph":
        unknown = set(data) - {"n_vars", "names", "pairs"}
        if unknown:
            raise GraphError(f"unknown graph keys: {sorted(unknown)}")
        try:
            pairs = tuple((int(i), int(j)) for i, j in data["pairs"])
            return cls(int(data["n_vars"]), pairs, tuple(data.get("names", ())))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"malformed graph document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "FactorGraph":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphError(f"graph file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise GraphError("graph document must be a JSON object")
        return cls.from_dict(data)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def save_graph(graph: FactorGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(graph.to_json())


def load_graph(path) -> FactorGraph:
    with open(path) as fh:
        return FactorGraph.from_json(fh.read())


def validate_graph(graph: FactorGraph) -> None:
    """Check every structural invariant; raise GraphError on the first violation."""
    factors, variables = graph.factors, graph.variables
    if [f.id for f in factors] != list(range(graph.n_factors)):
        raise GraphError("factor ids are not dense")
    if [v.id for v in variables] != list(range(graph.n_vars)):
        raise GraphError("variable ids are not dense")
    unary_count = [0] * graph.n_vars
    seen_scopes = set()
    for f in factors:
        if len(f.scope) not in (1, 2):
            raise GraphError(f"factor {f.id} has scope length {len(f.scope)}")
        if len(f.scope) == 2:
            if f.scope[0] >= f.scope[1]:
                raise GraphError(f"pairwise factor {f.id} scope not ascending")
            if f.scope in seen_scopes:
                raise GraphError(f"duplicate pairwise scope {f.scope}")
            seen_scopes.add(f.scope)
        else:
            unary_count[f.scope[0]] += 1
    if any(c != 1 for c in unary_count):
        raise GraphError("every variable needs exactly one unary factor")
    for v in variables:
        if len(set(v.factor_neighbors)) != len(v.factor_neighbors):
            raise GraphError(f"variable {v.id} lists a factor twice")
        expected = {f.id for f in factors if v.id in f.scope}
        if set(v.factor_neighbors) != expected:
            raise GraphError(f"variable {v.id} adjacency disagrees with factor scopes")
    edges = sum(len(v.factor_neighbors) for v in variables)
    if edges != sum(len(f.scope) for f in factors) or edges != graph.n_edges:
        raise GraphError("edge count mismatch")


# --- correlation -----------------------------------------------------------


def compute_correlation(labels) -> np.ndarray:
    """Pearson correlation between binary label columns.

    Constant columns get zero off-diagonal entries and a unit diagonal.
    """
    y = np.asarray(labels)
    if y.ndim != 2 or y.size == 0:
        raise GraphError("labels must be a non-empty M x N matrix")
    if y.shape[0] < 2:
        raise GraphError("need at least two rows to compute correlation")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary (0/1)")
    y = y.astype(float)
    centered = y - y.mean(axis=0)
    cov = centered.T @ centered
    sd = np.sqrt(np.diag(cov))
    live = sd > 0
    denom = np.outer(np.where(live, sd, 1.0), np.where(live, sd, 1.0))
    corr = np.where(np.outer(live, live), cov / denom, 0.0)
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def _check_corr(corr) -> np.ndarray:
    c = np.asarray(corr, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise GraphError("correlation matrix must be square")
    return c


def build_graph_min(corr, k: int, names: Sequence[str] = ()) -> FactorGraph:
    """Pair each variable with its ``k`` most strongly correlated partners.

    Selections are made per row by descending ``|corr|`` (smaller index wins
    ties) and merged as unordered pairs, so every variable ends up in at
    least ``k`` pairwise factors.
    """
    c = _check_corr(corr)
    n = c.shape[0]
    if not (1 <= k <= n - 1):
        raise GraphError(f"K={k} out of range [1, {n - 1}]")
    mag = np.abs(c)
    pairs = set()
    for i in range(n):
        others = np.array([j for j in range(n) if j != i])
        # lexsort: last key is primary
        order = np.lexsort((others, -mag[i, others]))
        for j in others[order[:k]]:
            pairs.add((min(i, int(j)), max(i, int(j))))
    return FactorGraph(n, tuple(sorted(pairs)), tuple(names))


def _all_pairs(n: int) -> np.ndarray:
    i, j = np.triu_indices(n, k=1)
    return np.stack([i, j], axis=1)


def build_graph_rand(n_vars: int, n_pairs: int, seed: int, names: Sequence[str] = ()) -> FactorGraph:
    """Sample ``n_pairs`` distinct pairs uniformly without replacement."""
    total = n_vars * (n_vars - 1) // 2
    if not (0 <= n_pairs <= total):
        raise GraphError(f"n_pairs={n_pairs} out of range [0, {total}]")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(total, size=n_pairs, replace=False))
    pairs = _all_pairs(n_vars)[chosen]
    return FactorGraph(n_vars, tuple(map(tuple, pairs.tolist())), tuple(names))


def build_graph_top(corr, n_pairs: int, names: Sequence[str] = ()) -> FactorGraph:
    """Keep the ``n_pairs`` pairs with the largest ``|corr|``."""
    c = _check_corr(corr)
    n = c.shape[0]
    total = n * (n - 1) // 2
    if not (0 <= n_pairs <= total):
        raise GraphError(f"n_pairs={n_pairs} out of range [0, {total}]")
    cand = _all_pairs(n)
    mag = np.abs(c[cand[:, 0], cand[:, 1]])
    order = np.lexsort((cand[:, 1], cand[:, 0], -mag))
    chosen = sorted(map(tuple, cand[order[:n_pairs]].tolist()))
    return FactorGraph(n, tuple(chosen), tuple(names))


def build_graph(policy: str, param: int, *, labels=None, corr=None, n_vars=None, seed: int = 0,
                names: Sequence[str] = ()) -> FactorGraph:
    """Dispatch on policy name (``min``, ``rand``, ``top``)."""
    if policy in ("min", "top"):
        if corr is None:
            if labels is None:
                raise GraphError(f"policy {policy!r} needs labels or a correlation matrix")
            corr = compute_correlation(labels)
        if policy == "min":
            return build_graph_min(corr, param, names)
        return build_graph_top(corr, param, names)
    if policy == "rand":
        if n_vars is None:
            if labels is not None:
                n_vars = np.asarray(labels).shape[1]
            elif corr is not None:
                n_vars = np.asarray(corr).shape[0]
            else:
                raise GraphError("policy 'rand' needs n_vars")
        return build_graph_rand(n_vars, param, seed, names)
    raise GraphError(f"unknown graph policy {policy!r}")


def graph_stats(graph: FactorGraph) -> GraphStats:
    adj = graph.adjacency()
    deg = graph.pairwise_degree
    diameter, disconnected = 0, False
    for src in range(graph.n_vars):
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        if len(dist) < graph.n_vars:
            disconnected = True
        diameter = max(diameter, max(dist.values()))
    return GraphStats(
        n_vars=graph.n_vars,
        n_unary=graph.n_vars,
        n_pairwise=graph.n_pairwise,
        min_degree=int(deg.min()),
        max_degree=int(deg.max()),
        diameter=diameter,
        disconnected=disconnected,
    )


def random_tree(n_vars: int, seed: int) -> FactorGraph:
    """Random recursive tree: each node attaches to a uniformly chosen earlier node."""
    rng = np.random.default_rng(seed)
    pairs = []
    order = rng.permutation(n_vars)
    for pos in range(1, n_vars):
        parent = order[rng.integers(pos)]
        pairs.append((int(order[pos]), int(parent)))
    return FactorGraph.from_pairs(n_vars, pairs)
