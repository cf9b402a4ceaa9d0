"""JSON checkpoints for trained models.

CRF heads are stored per iteration index and then per factor id (unary
factors are ``0..N-1``, pairwise factor ``p`` is ``N + p``), so a shared
model has a single iteration entry ``"0"``. The graph is embedded together
with its SHA-256 so a checkpoint can be matched against a graph file.
"""

from __future__ import annotations

import json

import numpy as np

from .graph import FactorGraph
from .inference import InferenceConfig
from .trainer import Model

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _head(kind: str, biases, weights=None) -> dict:
    out = {"kind": kind, "biases": np.asarray(biases).tolist()}
    if weights is not None:
        out["weights"] = np.asarray(weights).tolist()
    return out


def model_to_dict(model: Model) -> dict:
    p = model.params
    out = {
        "format": FORMAT_VERSION,
        "kind": model.kind,
        "n_vars": model.n_vars,
        "n_features": model.n_features,
        "hidden_units": model.hidden_units,
        "shapes": {name: list(arr.shape) for name, arr in sorted(p.items())},
        "sharing": model.inference.sharing,
        "iterations": model.inference.iterations,
        "epsilon": model.inference.epsilon,
        "graph_sha256": model.graph.sha256() if model.graph is not None else None,
        "graph": model.graph.to_dict() if model.graph is not None else None,
    }
    if model.hidden_units:
        out["feature_layer"] = {"weights": p["feat_w"].tolist(), "biases": p["feat_b"].tolist()}
    if model.kind == "sigmoid":
        out["sigmoid"] = {"weights": p["w"].tolist(), "biases": p["b"].tolist()}
        return out
    n = model.n_vars
    pair_kind = "softplus_linear" if model.kind == "linear_crf" else "softplus_const"
    heads = {}
    for s in range(model.n_sets):
        per = {str(k): _head("softplus_linear", p["unary_b"][s, k], p["unary_w"][s, k]) for k in range(n)}
        for q in range(model.graph.n_pairwise):
            w = p["pair_w"][s, q] if model.kind == "linear_crf" else None
            per[str(n + q)] = _head(pair_kind, p["pair_b"][s, q], w)
        heads[str(s)] = per
    out["heads"] = heads
    return out


def model_from_dict(data: dict) -> Model:
    try:
        kind = data["kind"]
        n, d = int(data["n_vars"]), int(data["n_features"])
        hidden = int(data.get("hidden_units", 0))
        inference = InferenceConfig(int(data["iterations"]), float(data["epsilon"]), data["sharing"])
        graph = FactorGraph.from_dict(data["graph"]) if data.get("graph") is not None else None
        if graph is not None and graph.sha256() != data.get("graph_sha256"):
            raise CheckpointError("embedded graph does not match its recorded hash")
        params: dict[str, np.ndarray] = {}
        if hidden:
            params["feat_w"] = np.array(data["feature_layer"]["weights"], dtype=float).reshape(hidden, d)
            params["feat_b"] = np.array(data["feature_layer"]["biases"], dtype=float)
        if kind == "sigmoid":
            params["w"] = np.array(data["sigmoid"]["weights"], dtype=float).reshape(n, hidden or d)
            params["b"] = np.array(data["sigmoid"]["biases"], dtype=float)
        else:
            heads = data["heads"]
            sets = sorted(heads, key=int)
            params["unary_w"] = np.array([[heads[s][str(k)]["weights"] for k in range(n)] for s in sets], dtype=float)
            params["unary_b"] = np.array([[heads[s][str(k)]["biases"] for k in range(n)] for s in sets], dtype=float)
            pair_ids = [str(n + q) for q in range(graph.n_pairwise)]
            params["pair_b"] = np.array([[heads[s][f]["biases"] for f in pair_ids] for s in sets],
                                        dtype=float).reshape(len(sets), graph.n_pairwise, 4)
            if kind == "linear_crf":
                params["pair_w"] = np.array([[heads[s][f]["weights"] for f in pair_ids] for s in sets],
                                            dtype=float).reshape(len(sets), graph.n_pairwise, 4, hidden or d)
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc!r}") from exc
    expected = {k: tuple(v) for k, v in data.get("shapes", {}).items()}
    actual = {k: v.shape for k, v in params.items()}
    if expected and expected != actual:
        raise CheckpointError(f"parameter shapes {actual} differ from recorded {expected}")
    try:
        return Model(kind, n, d, params, graph, inference, hidden)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc


def save_model(model: Model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=None, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> Model:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return model_from_dict(data)
