import json

import numpy as np
import pytest

from attrcrf.checkpoint import CheckpointError, load_model, model_from_dict, model_to_dict, save_model
from attrcrf.config import ConfigError, ExperimentConfig
from attrcrf.graph import build_graph_rand
from attrcrf.inference import InferenceConfig
from attrcrf.trainer import init_model, predict

Z = np.random.default_rng(0).normal(size=(4, 5))


@pytest.mark.parametrize("kind,sharing,hidden", [
    ("sigmoid", "shared", 0), ("const_crf", "shared", 0), ("linear_crf", "shared", 0),
    ("linear_crf", "independent", 0), ("const_crf", "independent", 3), ("sigmoid", "shared", 2),
])
def test_checkpoint_round_trip(tmp_path, kind, sharing, hidden):
    graph = None if kind == "sigmoid" else build_graph_rand(4, 3, 0)
    m = init_model(kind, 4, 5, graph=graph, seed=1, hidden_units=hidden,
                   inference=InferenceConfig(iterations=3, sharing=sharing))
    m.params = {k: v + np.random.default_rng(2).normal(size=v.shape) for k, v in m.params.items()}
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert back.kind == kind and back.inference == m.inference and back.graph == m.graph
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k])
    assert np.array_equal(predict(back, Z), predict(m, Z))
    save_model(back, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_checkpoint_layout():
    g = build_graph_rand(3, 2, 0)
    m = init_model("linear_crf", 3, 5, graph=g, inference=InferenceConfig(iterations=2, sharing="independent"))
    d = model_to_dict(m)
    assert sorted(d["heads"]) == ["0", "1"]
    assert sorted(d["heads"]["1"], key=int) == ["0", "1", "2", "3", "4"]
    assert d["heads"]["0"]["3"]["kind"] == "softplus_linear"
    assert np.array(d["heads"]["0"]["4"]["weights"]).shape == (4, 5)
    assert d["graph_sha256"] == g.sha256()
    assert d["shapes"]["pair_w"] == [2, 2, 4, 5]


def test_checkpoint_detects_tampered_graph():
    m = init_model("const_crf", 3, 5, graph=build_graph_rand(3, 2, 0))
    d = json.loads(json.dumps(model_to_dict(m)))
    d["graph"]["pairs"] = [[0, 1], [0, 2]] if d["graph"]["pairs"] != [[0, 1], [0, 2]] else [[0, 1], [1, 2]]
    with pytest.raises(CheckpointError):
        model_from_dict(d)


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_model(tmp_path / "nope.json")


# --- config ------------------------------------------------------------------------------


def test_config_defaults_valid():
    cfg = ExperimentConfig()
    assert cfg.inference().iterations == 2 and cfg.schedule().epochs == cfg.epochs


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": "sigmoid", "lr": 0.1})


@pytest.mark.parametrize("kwargs", [dict(model="svm"), dict(sharing="tied"), dict(policy="best"),
                                    dict(iterations=0), dict(momentum=1.0), dict(learning_rate=0.0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": "const_crf", "iterations": 4, "epochs": 3}))
    cfg = ExperimentConfig.from_json(path)
    assert (cfg.model, cfg.iterations, cfg.epochs) == ("const_crf", 4, 3)
    merged = cfg.merged({"iterations": 2, "epochs": None})
    assert (merged.iterations, merged.epochs) == (2, 3)
    assert ExperimentConfig.from_dict(merged.to_dict()) == merged


def test_config_required_files(tmp_path):
    cfg = ExperimentConfig(graph=str(tmp_path / "missing.json"))
    with pytest.raises(ConfigError):
        cfg.require_files("graph")
    with pytest.raises(ConfigError):
        cfg.require_files("data_dir")
    (tmp_path / "g.json").write_text("{}")
    ExperimentConfig(graph=str(tmp_path / "g.json")).require_files("graph")
