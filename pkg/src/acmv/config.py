"""Run configuration: nested dataclasses loaded from a YAML file."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass

import yaml

from acmv.errors import ConfigError


@dataclass
class ModelConfig:
    K: int = 3
    gcn_features: list = field(default_factory=lambda: [8, 2])
    gru_hidden: int = 64
    hour_dim: int = 8
    weather_dim: int = 4
    holiday_dim: int = 2
    window: int = 8
    activation: str = "relu"

    @property
    def V(self):
        return len(self.gcn_features)

    @property
    def context_dim(self):
        return self.hour_dim + self.weather_dim + self.holiday_dim

    def validate(self):
        if self.K < 1:
            raise ConfigError(f"model.K must be >= 1, got {self.K}")
        if not self.gcn_features or any(int(f) < 1 for f in self.gcn_features):
            raise ConfigError(f"model.gcn_features must be a nonempty list of positive ints")
        if self.window < 1:
            raise ConfigError(f"model.window must be >= 1, got {self.window}")
        if self.gru_hidden < 1:
            raise ConfigError("model.gru_hidden must be positive")
        if self.activation not in ("relu", "tanh", "identity"):
            raise ConfigError(f"model.activation {self.activation!r} not in relu/tanh/identity")


@dataclass
class GraphConfig:
    theta: float = 1000.0
    kappa: float = 2000.0
    gamma: float = 0.5


@dataclass
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    patience: int = 20
    view_loss_weight: float = 0.5


@dataclass
class SplitConfig:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1


@dataclass
class GeneratorConfig:
    rows: int = 8
    cols: int = 10
    cell_size_m: float = 500.0
    n_categories: int = 6
    n_lines: int = 5
    days: int = 60
    n_hubs: int = 4
    office_fraction: float = 0.2
    base_level: float = 200.0
    base_variation: float = 0.3
    hub_amplitude: float = 400.0
    line_amplitude: float = 300.0
    line_noise: float = 0.3
    station_noise: float = 0.15
    line_persistence: float = 0.8
    rain_damping: float = 0.5
    rain_persistence: float = 0.95
    holiday_period: int = 7
    noise: float = 10.0


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """Stable hash of the settings that shape a trained model."""
        blob = json.dumps({"model": asdict(self.model), "graph": asdict(self.graph)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}.{name}" if path else name)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data):
    cfg = _build(RunConfig, data, "")
    cfg.model.validate()
    return cfg


def load_config(path=None):
    if path is None:
        return config_from_dict({})
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
