"""Experiment configuration: one flat dataclass shared by the CLI and scripts.

A config file is a JSON object whose keys are field names; unknown keys are
rejected. Command-line flags override values from the file.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .graph import POLICIES
from .inference import SHARING_MODES, InferenceConfig
from .trainer import MODEL_KINDS, TrainSchedule


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # model
    model: str = "linear_crf"
    iterations: int = 2
    sharing: str = "shared"
    epsilon: float = 1e-12
    hidden_units: int = 0
    # graph
    policy: str = "min"
    param: int = 2
    # optimisation
    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 1.0
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_drops: list = field(default_factory=list)
    # synthetic data
    n_attrs: int = 12
    n_features: int = 16
    n_samples: int = 6000
    coupling_strength: float = 1.5
    noise: float = 0.3
    n_hidden: int = 4
    n_motifs: int = 4
    # seeds
    seed: int = 0
    data_seed: int = 0
    # paths
    data_dir: str | None = None
    graph: str | None = None
    checkpoint: str | None = None
    out: str | None = None
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.sharing not in SHARING_MODES:
            raise ConfigError(f"sharing must be one of {SHARING_MODES}, got {self.sharing!r}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.epochs < 0 or self.batch_size < 1 or self.threads < 1:
            raise ConfigError("epochs must be >= 0, batch_size and threads >= 1")
        if self.learning_rate <= 0 or not (0 <= self.momentum < 1):
            raise ConfigError("learning_rate must be positive and momentum in [0, 1)")

    # --- derived objects -------------------------------------------------

    def inference(self) -> InferenceConfig:
        try:
            return InferenceConfig(self.iterations, self.epsilon, self.sharing)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def schedule(self) -> TrainSchedule:
        drops = tuple((int(e), float(lr)) for e, lr in self.lr_drops)
        return TrainSchedule(self.epochs, self.batch_size, self.learning_rate, self.momentum,
                             self.weight_decay, drops, self.seed)

    def generator_kwargs(self) -> dict:
        return {"n_attrs": self.n_attrs, "n_features": self.n_features, "n_samples": self.n_samples,
                "coupling_strength": self.coupling_strength, "noise": self.noise,
                "n_hidden": self.n_hidden, "n_motifs": self.n_motifs, "seed": self.data_seed}

    # --- (de)serialisation -------------------------------------------------

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = sorted(set(data) - set(cls.field_names()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def merged(self, overrides: dict) -> "ExperimentConfig":
        """Copy with every non-None override applied."""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return self.from_dict(data)

    def require_files(self, *keys: str) -> None:
        """Raise ConfigError unless each named path field points at an existing file or directory."""
        for key in keys:
            path = getattr(self, key)
            if path is None:
                raise ConfigError(f"missing required path: {key}")
            if not os.path.exists(path):
                raise ConfigError(f"{key} not found: {path}")
