"""Softplus potential heads: features -> strictly positive potential tables.

Table entries are indexed by scope state in row-major order: unary heads
produce ``[x=0, x=1]`` and pairwise heads ``[(0,0), (0,1), (1,0), (1,1)]``.

The array-level functions (``linear_tables`` and friends) work on stacked
parameters of many heads at once, ``weights[F, S, D]`` and ``biases[F, S]``,
evaluated for a batch of feature rows ``z[B, D]``. ``PotentialHead`` is the
single-head view on top of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("softplus_linear", "softplus_const")

# softplus(a) underflows to 0 below a ~ -745; clamp keeps tables strictly positive.
TINY = np.finfo(float).tiny


def softplus(a):
    a = np.asarray(a, dtype=float)
    out = np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))
    return np.maximum(out, TINY)


def logistic(a):
    a = np.asarray(a, dtype=float)
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# --- stacked heads -----------------------------------------------------------


def _preactivation(weights, biases, z):
    f, s, d = weights.shape
    return (z @ weights.reshape(f * s, d).T).reshape(len(z), f, s) + biases


def linear_tables(weights, biases, z):
    """softplus(W_X . z + b_X) for every head and state: (B, F, S)."""
    return softplus(_preactivation(weights, biases, z))


def linear_tables_backward(weights, biases, z, upstream):
    """Return (grad_weights, grad_biases, grad_z) summed over the batch."""
    f, s, d = weights.shape
    g_pre = upstream * logistic(_preactivation(weights, biases, z))
    flat = g_pre.reshape(len(z), f * s)
    grad_w = (flat.T @ z).reshape(f, s, d)
    grad_b = g_pre.sum(axis=0)
    grad_z = flat @ weights.reshape(f * s, d)
    return grad_w, grad_b, grad_z


def const_tables(biases, batch: int):
    return np.broadcast_to(softplus(biases), (batch,) + np.shape(biases)).copy()


def const_tables_backward(biases, upstream):
    return (upstream * logistic(biases)).sum(axis=0)


# --- single head -----------------------------------------------------------


@dataclass
class PotentialHead:
    kind: str
    n_states: int
    biases: np.ndarray
    weights: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.n_states not in (2, 4):
            raise ValueError("n_states must be 2 (unary) or 4 (pairwise)")
        self.biases = np.asarray(self.biases, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.biases.shape != (self.n_states,):
            raise ValueError(f"biases must have shape ({self.n_states},)")
        if self.kind == "softplus_linear":
            if self.weights.ndim != 2 or self.weights.shape[0] != self.n_states:
                raise ValueError(f"weights must have shape ({self.n_states}, D)")
        elif self.weights.size:
            raise ValueError("softplus_const heads carry no weights")

    @property
    def n_features(self) -> int:
        return self.weights.shape[1] if self.kind == "softplus_linear" else 0


@dataclass
class HeadGrad:
    grad_weights: np.ndarray
    grad_biases: np.ndarray
    grad_z: np.ndarray


def _check_z(head: PotentialHead, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if head.kind == "softplus_linear" and z.shape != (head.n_features,):
        raise ValueError(f"feature dimension {z.shape} does not match head ({head.n_features},)")
    return z


def eval_head(head: PotentialHead, z) -> np.ndarray:
    z = _check_z(head, z)
    if head.kind == "softplus_const":
        return softplus(head.biases)
    return linear_tables(head.weights[None], head.biases[None], z[None])[0, 0]


def backward_head(head: PotentialHead, z, upstream) -> HeadGrad:
    z = _check_z(head, z)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (head.n_states,):
        raise ValueError(f"upstream must have shape ({head.n_states},)")
    if head.kind == "softplus_const":
        return HeadGrad(np.zeros_like(head.weights), upstream * logistic(head.biases), np.zeros_like(z))
    gw, gb, gz = linear_tables_backward(head.weights[None], head.biases[None], z[None], upstream[None, None])
    return HeadGrad(gw[0], gb[0], gz[0])


def init_weights(rng: np.random.Generator, shape, n_features: int) -> np.ndarray:
    scale = 1.0 / np.sqrt(n_features) if n_features else 0.0
    return rng.uniform(-scale, scale, size=shape)


def init_head(kind: str, n_states: int, n_features: int, seed: int) -> PotentialHead:
    """Uniform(-1/sqrt(D), 1/sqrt(D)) weights, zero biases."""
    biases = np.zeros(n_states)
    if kind == "softplus_const":
        return PotentialHead(kind, n_states, biases)
    rng = np.random.default_rng(seed)
    return PotentialHead(kind, n_states, biases, init_weights(rng, (n_states, n_features), n_features))
