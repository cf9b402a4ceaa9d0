"""Classifier variants, BCE loss, SGD with momentum, training loop and metrics.

Three model kinds:

* ``sigmoid``    -- independent logistic classifiers, p_i = sigma(w_i . z + b_i)
* ``const_crf``  -- softplus-linear unaries, softplus-constant pairwise tables
* ``linear_crf`` -- softplus-linear unary and pairwise tables

CRF predictions are the sum-product marginals of the configured graph. An
optional trainable ``tanh(W z + b)`` feature layer can sit in front of any
kind; by default features are used as given.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .graph import FactorGraph
from .inference import InferenceConfig, TableSet, backward_sum_product, run_sum_product
from .potentials import (
    const_tables,
    const_tables_backward,
    init_weights,
    linear_tables,
    linear_tables_backward,
    logistic,
)

log = logging.getLogger(__name__)

MODEL_KINDS = ("sigmoid", "const_crf", "linear_crf")
BCE_EPS = 1e-7


class TrainingError(RuntimeError):
    pass


class DivergenceError(TrainingError):
    pass


@dataclass
class Model:
    kind: str
    n_vars: int
    n_features: int
    params: dict[str, np.ndarray]
    graph: FactorGraph | None = None
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    hidden_units: int = 0  # 0 = identity feature map

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "sigmoid":
            if self.graph is not None and self.graph.n_pairwise:
                raise ValueError("sigmoid models carry no pairwise structure")
        else:
            if self.graph is None:
                raise ValueError(f"{self.kind} needs a factor graph")
            if self.graph.n_vars != self.n_vars:
                raise ValueError("graph size does not match the number of attributes")

    @property
    def feature_dim(self) -> int:
        return self.hidden_units or self.n_features

    @property
    def n_sets(self) -> int:
        return self.inference.n_table_sets

    def copy(self) -> "Model":
        return Model(self.kind, self.n_vars, self.n_features, {k: v.copy() for k, v in self.params.items()},
                     self.graph, self.inference, self.hidden_units)


def init_model(kind: str, n_vars: int, n_features: int, *, graph: FactorGraph | None = None,
               inference: InferenceConfig | None = None, seed: int = 0, zero: bool = False,
               hidden_units: int = 0) -> Model:
    """Weights ~ U(-1/sqrt(D), 1/sqrt(D)), biases 0 (all zero with ``zero=True``)."""
    inference = inference or InferenceConfig()
    rng = np.random.default_rng(seed)
    d = hidden_units or n_features

    def weights(shape, fan_in):
        return np.zeros(shape) if zero else init_weights(rng, shape, fan_in)

    params: dict[str, np.ndarray] = {}
    if hidden_units:
        params["feat_w"] = weights((hidden_units, n_features), n_features)
        params["feat_b"] = np.zeros(hidden_units)
    if kind == "sigmoid":
        params["w"] = weights((n_vars, d), d)
        params["b"] = np.zeros(n_vars)
    elif kind in ("const_crf", "linear_crf"):
        if graph is None:
            raise ValueError(f"{kind} needs a factor graph")
        s, p = inference.n_table_sets, graph.n_pairwise
        params["unary_w"] = weights((s, n_vars, 2, d), d)
        params["unary_b"] = np.zeros((s, n_vars, 2))
        if kind == "linear_crf":
            params["pair_w"] = weights((s, p, 4, d), d)
        params["pair_b"] = np.zeros((s, p, 4))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return Model(kind, n_vars, n_features, params, graph, inference, hidden_units)


# --- forward / backward -------------------------------------------------------------


def _features(model: Model, z):
    if not model.hidden_units:
        return z, None
    pre = z @ model.params["feat_w"].T + model.params["feat_b"]
    return np.tanh(pre), pre


def _tables(model: Model, feats) -> list[TableSet]:
    b = feats.shape[0]
    p = model.params
    sets = []
    for s in range(model.n_sets):
        unary = linear_tables(p["unary_w"][s], p["unary_b"][s], feats)
        if model.kind == "linear_crf":
            pair = linear_tables(p["pair_w"][s], p["pair_b"][s], feats)
        else:
            pair = const_tables(p["pair_b"][s], b)
        sets.append(TableSet(unary, pair))
    return sets


def _check_input(model: Model, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != model.n_features:
        raise ValueError(f"features have shape {z.shape}, expected (B, {model.n_features})")
    return z


def _forward(model: Model, z):
    feats, pre = _features(model, z)
    if model.kind == "sigmoid":
        scores = feats @ model.params["w"].T + model.params["b"]
        return logistic(scores), (feats, pre, None)
    p, tape = run_sum_product(model.graph, _tables(model, feats), model.inference)
    return p, (feats, pre, tape)


def predict(model: Model, z, threads: int = 1, chunk: int = 1024) -> np.ndarray:
    """Marginals p(x_i = 1 | z). ``z`` is (D,) or (B, D)."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = _check_input(model, z[None] if single else z)
    if threads > 1 and len(z) > chunk:
        parts = [z[i:i + chunk] for i in range(0, len(z), chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            p = np.concatenate(list(pool.map(lambda part: _forward(model, part)[0], parts)))
    else:
        p = np.concatenate([_forward(model, z[i:i + chunk])[0] for i in range(0, max(len(z), 1), chunk)])
    return p[0] if single else p


def bce_loss(p, y) -> float:
    """Mean binary cross-entropy over all entries, probabilities clamped to [eps, 1 - eps]."""
    p = np.clip(np.asarray(p, dtype=float), BCE_EPS, 1 - BCE_EPS)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def bce_grad(p, y) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    pc = np.clip(p, BCE_EPS, 1 - BCE_EPS)
    g = -(y / pc - (1 - y) / (1 - pc)) / p.size
    return np.where((p < BCE_EPS) | (p > 1 - BCE_EPS), 0.0, g)


def loss_and_grad(model: Model, z, y, *, input_grad: bool = False):
    """Loss, parameter gradients (same keys as ``model.params``) and optionally dL/dz."""
    z = _check_input(model, z)
    p, (feats, pre, tape) = _forward(model, z)
    loss = bce_loss(p, y)
    g_p = bce_grad(p, y)
    params = model.params
    grads: dict[str, np.ndarray] = {}
    if model.kind == "sigmoid":
        g_s = g_p * p * (1 - p)
        grads["w"] = g_s.T @ feats
        grads["b"] = g_s.sum(axis=0)
        g_feats = g_s @ params["w"]
    else:
        table_grads = backward_sum_product(tape, g_p)
        g_feats = np.zeros_like(feats)
        grads["unary_w"] = np.zeros_like(params["unary_w"])
        grads["unary_b"] = np.zeros_like(params["unary_b"])
        grads["pair_b"] = np.zeros_like(params["pair_b"])
        if model.kind == "linear_crf":
            grads["pair_w"] = np.zeros_like(params["pair_w"])
        for s, tg in enumerate(table_grads):
            gw, gb, gz = linear_tables_backward(params["unary_w"][s], params["unary_b"][s], feats, tg.unary)
            grads["unary_w"][s], grads["unary_b"][s] = gw, gb
            g_feats += gz
            if model.kind == "linear_crf":
                gw, gb, gz = linear_tables_backward(params["pair_w"][s], params["pair_b"][s], feats, tg.pairwise)
                grads["pair_w"][s], grads["pair_b"][s] = gw, gb
                g_feats += gz
            else:
                grads["pair_b"][s] = const_tables_backward(params["pair_b"][s], tg.pairwise)
    if model.hidden_units:
        g_pre = g_feats * (1 - np.tanh(pre) ** 2)
        grads["feat_w"] = g_pre.T @ z
        grads["feat_b"] = g_pre.sum(axis=0)
        g_z = g_pre @ params["feat_w"]
    else:
        g_z = g_feats
    if input_grad:
        return loss, grads, g_z
    return loss, grads


def parallel_loss_and_grad(model: Model, z, y, threads: int = 1):
    """``loss_and_grad`` over ``threads`` contiguous slices of the batch.

    Each worker fills its own gradient dict; the slices are merged in order,
    weighted by their share of the batch, so the result does not depend on
    scheduling.
    """
    if threads <= 1 or len(z) < 2 * threads:
        return loss_and_grad(model, z, y)
    bounds = np.linspace(0, len(z), threads + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda sl: loss_and_grad(model, z[sl], y[sl]), slices))
    weights = [(sl.stop - sl.start) / len(z) for sl in slices]
    loss = sum(w * part[0] for w, part in zip(weights, parts))
    grads = {name: sum(w * part[1][name] for w, part in zip(weights, parts)) for name in parts[0][1]}
    return loss, grads


# --- optimizer --------------------------------------------------------------------


@dataclass
class OptimizerState:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must lie in [0, 1)")


def sgd_step(params: dict, grads: dict, state: OptimizerState) -> tuple[dict, OptimizerState]:
    """Classical momentum: v <- m v + g (+ wd theta); theta <- theta - lr v."""
    if set(params) != set(grads):
        raise ValueError("parameter and gradient keys differ")
    new_params, velocity = {}, dict(state.velocity)
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=float)
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {theta.shape} for {name!r}")
        if state.weight_decay:
            g = g + state.weight_decay * theta
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(theta)
        elif v.shape != theta.shape:
            raise ValueError(f"velocity shape mismatch for {name!r}")
        v = state.momentum * v + g
        velocity[name] = v
        new_params[name] = theta - state.learning_rate * v
    return new_params, OptimizerState(state.learning_rate, state.momentum, state.weight_decay, velocity)


# --- training --------------------------------------------------------------------


@dataclass
class TrainSchedule:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_drops: tuple[tuple[int, float], ...] = ()  # (epoch, new learning rate)
    seed: int = 0

    @classmethod
    def paper(cls, **overrides) -> "TrainSchedule":
        """lr 0.1 and the literal momentum of 1e-4."""
        return cls(**{"learning_rate": 0.1, "momentum": 1e-4, **overrides})

    def lr_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for start, value in sorted(self.lr_drops):
            if epoch >= start:
                lr = value
        return lr


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_f1: float


def train(model: Model, dataset: Dataset, schedule: TrainSchedule,
          threads: int = 1) -> tuple[Model, list[EpochRecord]]:
    """Minibatch SGD; returns the parameters of the best validation-accuracy epoch."""
    z_train, y_train = dataset.part("train")
    z_val, y_val = dataset.part("val")
    if not len(z_train) or not len(z_val):
        raise TrainingError("dataset needs non-empty train and val splits")
    model = model.copy()
    if schedule.epochs <= 0:
        return model, []
    rng = np.random.default_rng(schedule.seed)
    opt = OptimizerState(schedule.learning_rate, schedule.momentum, schedule.weight_decay)
    best, best_acc, history = model.copy(), -math.inf, []
    for epoch in range(1, schedule.epochs + 1):
        opt.learning_rate = schedule.lr_at(epoch)
        order = rng.permutation(len(z_train))
        total, count = 0.0, 0
        for start in range(0, len(order), schedule.batch_size):
            idx = order[start:start + schedule.batch_size]
            loss, grads = parallel_loss_and_grad(model, z_train[idx], y_train[idx], threads)
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise DivergenceError(f"non-finite loss or gradient at epoch {epoch}")
            model.params, opt = sgd_step(model.params, grads, opt)
            total += loss * len(idx)
            count += len(idx)
        report = metrics(predict(model, z_val, threads=threads), y_val)
        history.append(EpochRecord(epoch, float(total / count), report.accuracy, report.avg_f1))
        log.debug("epoch %d loss %.5f val acc %.4f f1 %.4f", epoch, total / count, report.accuracy, report.avg_f1)
        if report.accuracy > best_acc:
            best, best_acc = model.copy(), report.accuracy
    return best, history


def write_history_csv(path, history: list[EpochRecord]) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_accuracy,val_f1\n")
        for r in history:
            fh.write(f"{r.epoch},{float(r.train_loss)!r},{float(r.val_accuracy)!r},{float(r.val_f1)!r}\n")


def read_history_csv(path) -> list[EpochRecord]:
    with open(path) as fh:
        lines = fh.read().splitlines()[1:]
    out = []
    for line in lines:
        e, loss, acc, f1 = line.split(",")
        out.append(EpochRecord(int(e), float(loss), float(acc), float(f1)))
    return out


# --- metrics ----------------------------------------------------------------------


@dataclass
class MetricsReport:
    accuracy: float
    avg_precision: float
    avg_recall: float
    avg_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    def summary(self) -> dict:
        return {"accuracy": self.accuracy, "avg_precision": self.avg_precision,
                "avg_recall": self.avg_recall, "avg_f1": self.avg_f1}


def metrics(p, labels, threshold: float = 0.5) -> MetricsReport:
    """Per-cell accuracy and macro-averaged precision/recall/F1 (0/0 := 0)."""
    pred = (np.atleast_2d(p) >= threshold).astype(int)
    y = np.atleast_2d(labels).astype(int)
    tp = ((pred == 1) & (y == 1)).sum(axis=0)
    fp = ((pred == 1) & (y == 0)).sum(axis=0)
    fn = ((pred == 0) & (y == 1)).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / np.where(precision + recall > 0,
                                                                             precision + recall, 1), 0.0)
    return MetricsReport(float((pred == y).mean()), float(precision.mean()), float(recall.mean()),
                         float(f1.mean()), precision, recall, f1)


def evaluate(model: Model, dataset: Dataset, split: str = "test", threads: int = 1) -> MetricsReport:
    z, y = dataset.part(split)
    if not len(z):
        raise ValueError(f"split {split!r} is empty")
    return metrics(predict(model, z, threads=threads), y)

