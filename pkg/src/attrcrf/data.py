"""Datasets: CSV round-tripping and a synthetic structured-attribute generator."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .graph import FactorGraph
from .inference import TableSet
from .oracle import MAX_ENUM_VARS, gibbs_sample

SPLITS = ("train", "val", "test")


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray  # (M, D)
    labels: np.ndarray  # (M, N) of 0/1
    split: np.ndarray  # (M,) of "train" | "val" | "test"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels).astype(np.int64)
        self.split = np.asarray(self.split).astype(str)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise DataError("features and labels must be 2-D")
        m = self.features.shape[0]
        if self.labels.shape[0] != m or self.split.shape != (m,):
            raise DataError("features, labels and split disagree on row count")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be binary")
        if not np.isin(self.split, SPLITS).all():
            raise DataError(f"split entries must be one of {SPLITS}")

    @property
    def n_attrs(self) -> int:
        return self.labels.shape[1]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def part(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split == name
        return self.features[mask], self.labels[mask]


@dataclass
class SyntheticTruth:
    graph: FactorGraph
    tables: TableSet
    mixing: np.ndarray  # (D, N)
    hidden: tuple[int, ...]
    confounded: tuple[tuple[int, int], ...] = ()


def save_dataset(ds: Dataset, out_dir, prefix: str = "") -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, f"{prefix}{k}.csv") for k in ("features", "labels", "split")}
    np.savetxt(paths["features"], ds.features, fmt="%.17g", delimiter=",")
    np.savetxt(paths["labels"], ds.labels, fmt="%d", delimiter=",")
    with open(paths["split"], "w") as fh:
        fh.write("\n".join(ds.split.tolist()) + "\n")
    return paths


def load_dataset(features_path, labels_path, split_path) -> Dataset:
    try:
        features = np.loadtxt(features_path, delimiter=",", ndmin=2)
        labels = np.loadtxt(labels_path, delimiter=",", ndmin=2)
        with open(split_path) as fh:
            split = [line.strip() for line in fh if line.strip()]
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset: {exc}") from exc
    if not np.array_equal(labels, np.round(labels)):
        raise DataError("labels must be integers 0/1")
    return Dataset(features, labels.astype(np.int64), np.array(split))


def load_dataset_dir(data_dir, prefix: str = "") -> Dataset:
    return load_dataset(*(os.path.join(data_dir, f"{prefix}{k}.csv") for k in ("features", "labels", "split")))


def split_rows(m: int, rng: np.random.Generator, fractions=(0.6, 0.2, 0.2)) -> np.ndarray:
    perm = rng.permutation(m)
    n_train = int(round(fractions[0] * m))
    n_val = int(round(fractions[1] * m))
    split = np.empty(m, dtype="<U5")
    split[perm[:n_train]] = "train"
    split[perm[n_train:n_train + n_val]] = "val"
    split[perm[n_train + n_val:]] = "test"
    return split


def _truth_graph(n: int, rng: np.random.Generator, extra_edges: int, required=()) -> FactorGraph:
    pairs = {(min(a, b), max(a, b)) for a, b in required}
    order = rng.permutation(n)
    for pos in range(1, n):
        parent = order[rng.integers(pos)]
        a, b = int(order[pos]), int(parent)
        pairs.add((min(a, b), max(a, b)))
    total = n * (n - 1) // 2
    while len(pairs) < min(total, n - 1 + len(required) + extra_edges):
        a, b = rng.choice(n, size=2, replace=False)
        pairs.add((int(min(a, b)), int(max(a, b))))
    return FactorGraph(n, tuple(sorted(pairs)))


def _bfs_order(graph: FactorGraph, root: int) -> list[int]:
    adj = graph.adjacency()
    order, seen = [root], {root}
    for v in order:
        for u in sorted(adj[v]):
            if u not in seen:
                seen.add(u)
                order.append(u)
    return order


def generate_synthetic(n_attrs: int = 12, n_features: int = 16, n_samples: int = 6000,
                       coupling_strength: float = 1.5, noise: float = 1.0, seed: int = 0, *,
                       n_hidden: int | None = None, n_confounded: int = 0, n_motifs: int = 0,
                       extra_edges: int | None = None, bias: float = 0.75, signal: float = 1.0,
                       orthogonal: bool = True, burn_in: int = 200, thin: int = 2,
                       hidden_cluster: bool = False) -> tuple[Dataset, SyntheticTruth]:
    """Sample labels from a random pairwise MRF and features from a lossy linear map.

    The MRF has Ising-style potentials: a random tree plus ``extra_edges``
    chords, couplings ``+-coupling_strength * U(0.5, 1.5)`` and negative unary
    fields of magnitude ~``bias`` (sparse positives). Labels are drawn by
    Gibbs sampling. Features are ``z = A (2y - 1) + noise * eps``, where ``A``
    has orthonormal columns from which some attribute directions are
    projected away:

    * ``n_hidden`` attributes lose their own direction ``e_h`` entirely;
    * ``n_confounded`` coupled pairs lose ``e_i - e_j``, so only the sum
      ``y_i + y_j`` stays visible;
    * each of ``n_motifs`` planted triples ``(h, a, b)`` has ``h`` hidden,
      coupled positively to ``a`` and negatively to ``b``, with ``(a, b)``
      confounded and ``a`` more frequent than ``b``. Then ``h`` tends to be on
      exactly when one of ``a``/``b`` is, which is not a monotone function of
      the visible sum.
    """
    if not (1 <= n_attrs <= MAX_ENUM_VARS):
        raise DataError(f"n_attrs must lie in [1, {MAX_ENUM_VARS}], got {n_attrs}")
    if coupling_strength < 0 or noise < 0:
        raise DataError("coupling_strength and noise must be non-negative")
    if n_features < 1 or n_samples < 5:
        raise DataError("need n_features >= 1 and n_samples >= 5")
    if n_motifs < 0 or 3 * n_motifs > n_attrs:
        raise DataError("need 0 <= 3 * n_motifs <= n_attrs")
    n_hidden = n_attrs // 3 if n_hidden is None else n_hidden
    if not (n_motifs <= n_hidden <= n_attrs):
        raise DataError("n_hidden out of range (must also cover the motif attributes)")
    extra_edges = n_attrs // 2 if extra_edges is None else extra_edges

    rng = np.random.default_rng(seed)
    motifs = rng.permutation(n_attrs)[:3 * n_motifs].reshape(n_motifs, 3).tolist()
    required = [(h, a) for h, a, _ in motifs] + [(h, b) for h, _, b in motifs]
    graph = _truth_graph(n_attrs, rng, extra_edges, required)
    signs = np.where(rng.random(graph.n_pairwise) < 0.75, 1.0, -1.0)
    coupling = signs * coupling_strength * rng.uniform(0.5, 1.5, graph.n_pairwise)
    field = -bias * rng.uniform(0.5, 1.5, n_attrs)
    index = {pair: q for q, pair in enumerate(graph.pairs)}
    for h, a, b in motifs:
        coupling[index[(min(h, a), max(h, a))]] = 1.5 * coupling_strength
        coupling[index[(min(h, b), max(h, b))]] = -1.5 * coupling_strength
        field[a], field[b] = -0.5 * bias, -1.5 * bias
    spin = np.array([-1.0, 1.0])
    unary = np.exp(field[:, None] * spin[None, :])
    pairwise = np.exp(coupling[:, None] * np.outer(spin, spin).reshape(1, 4))
    tables = TableSet(unary, pairwise)

    labels = gibbs_sample(graph, tables, n_samples, burn_in=burn_in, seed=int(rng.integers(2**31)),
                          n_chains=min(n_samples, 500), thin=thin)
    motif_hidden = {h for h, _, _ in motifs}
    motif_members = {v for m in motifs for v in m}
    free = [v for v in range(n_attrs) if v not in motif_members]
    n_extra = min(n_hidden - n_motifs, len(free))
    if hidden_cluster:
        extra = [v for v in _bfs_order(graph, int(rng.integers(n_attrs))) if v in free][:n_extra]
    else:
        extra = rng.choice(free, size=n_extra, replace=False).tolist() if n_extra else []
    hidden = tuple(sorted(motif_hidden | {int(v) for v in extra}))
    candidates = [q for q, (i, j) in enumerate(graph.pairs)
                  if i not in hidden and j not in hidden and i not in motif_members and j not in motif_members]
    picked = rng.choice(candidates, size=min(n_confounded, len(candidates)), replace=False) if candidates else []
    confounded = tuple(sorted([graph.pairs[q] for q in picked] + [(min(a, b), max(a, b)) for _, a, b in motifs]))
    mixing = rng.normal(size=(n_features, n_attrs))
    if orthogonal and n_features >= n_attrs:
        mixing, _ = np.linalg.qr(mixing)
    else:
        mixing /= np.linalg.norm(mixing, axis=0, keepdims=True)
    mixing *= signal
    eye = np.eye(n_attrs)
    killed = [eye[h] for h in hidden] + [eye[i] - eye[j] for i, j in confounded]
    if killed:
        basis, _ = np.linalg.qr(np.array(killed).T)
        mixing = mixing - (mixing @ basis) @ basis.T
    features = (2.0 * labels - 1.0) @ mixing.T + noise * rng.normal(size=(n_samples, n_features))
    split = split_rows(n_samples, rng)
    return Dataset(features, labels, split), SyntheticTruth(graph, tables, mixing, hidden, confounded)
