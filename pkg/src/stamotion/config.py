"""Run configuration: model dimensions, ablation flags, optimizer and loss weights."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace


class ConfigError(ValueError):
    pass


@dataclass
class AblationFlags:
    no_body_aware_features: bool = False   # drop NSSM(H) and AM(H)
    no_pose_init: bool = False             # drop NSSM(pose) and its uplift
    no_cam_init: bool = False              # drop NSSM(cam), AM(cam) and the camera uplift
    no_lstm: bool = False                  # coarse estimate is the output
    am_on_pose: bool = False               # extra attention map on the pose uplift
    lstm_on_features: bool = False         # LSTM over Z before a single predictor pass

    def validate(self):
        if self.no_lstm and self.lstm_on_features:
            raise ConfigError("no_lstm and lstm_on_features are mutually exclusive")
        if self.no_pose_init and self.am_on_pose:
            raise ConfigError("am_on_pose needs the pose initialization")
        if self.no_body_aware_features and self.no_pose_init and self.no_cam_init:
            raise ConfigError("every similarity map is ablated")
        return self


@dataclass
class ModelConfig:
    window: int = 16
    stride: int = 14
    grid: int = 8
    feature_dim: int = 2048
    uplift_dim: int = 512
    attn_dim: int = 1024
    lstm_layers: int = 3
    lstm_hidden: int = 2048
    lstm_bidirectional: bool = False
    head_hidden: int = 1024
    head_iterations: int = 3
    head_start: str = "mean"        # or "init": start from the per-frame initial estimate
    activation: str = "tanh"
    attn_scale: bool = True
    nssm_mode: str = "cosine"       # or "minmax"
    fused_softmax: bool = False
    flags: AblationFlags = field(default_factory=AblationFlags)

    def validate(self):
        if not 1 <= self.stride <= self.window:
            raise ConfigError("stride must satisfy 1 <= stride <= window")
        if self.grid > 8 and self.grid % 8:
            raise ConfigError("grids larger than 8 must be a multiple of 8 for pooling")
        if self.nssm_mode not in ("cosine", "minmax"):
            raise ConfigError(f"unknown nssm_mode {self.nssm_mode!r}")
        if self.head_start not in ("init", "mean"):
            raise ConfigError(f"unknown head_start {self.head_start!r}")
        if self.activation not in ("tanh", "sigmoid", "identity"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        self.flags.validate()
        return self


@dataclass
class LossWeights:
    lambda1: float = 300.0
    lambda2: float = 0.06
    lambda3: float = 60.0
    lambda_shape: float = 1.0
    lambda_pose: float = 1.0
    pose_mode: str = "axis_angle"   # or "rotmat"

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and v < 0:
                raise ConfigError(f"{f.name} must be non-negative")
        if self.pose_mode not in ("axis_angle", "rotmat"):
            raise ConfigError(f"unknown pose_mode {self.pose_mode!r}")
        return self


@dataclass
class OptimConfig:
    lr: float = 5e-5
    batch_size: int = 32
    epochs: int = 35
    lr_decay_factor: float = 10.0
    patience: int = 5
    val_fraction: float = 0.1

    def validate(self):
        if not (isinstance(self.lr, (int, float)) and self.lr > 0):
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, epochs and patience must be >= 1")
        if self.lr_decay_factor < 1:
            raise ConfigError("lr_decay_factor must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must be in [0, 1)")
        return self


@dataclass
class ProviderConfig:
    feature_sigma: float = 0.1
    pose_sigma: float = 0.05
    cam_sigma: float = 0.02
    seed: int = 0

    def validate(self):
        if min(self.feature_sigma, self.pose_sigma, self.cam_sigma) < 0:
            raise ConfigError("noise levels must be non-negative")
        return self


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    seed: int = 0

    def validate(self):
        self.model.validate()
        self.optim.validate()
        self.loss.validate()
        self.provider.validate()
        return self

    def to_dict(self):
        return asdict(self)

    def with_flags(self, **flags):
        return replace(self, model=replace(self.model, flags=replace(self.model.flags, **flags)))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        model = dict(d.pop("model", {}))
        flags = AblationFlags(**model.pop("flags", {}))
        cfg = cls(
            model=ModelConfig(**model, flags=flags),
            optim=OptimConfig(**d.pop("optim", {})),
            loss=LossWeights(**d.pop("loss", {})),
            provider=ProviderConfig(**d.pop("provider", {})),
            **d,
        )
        return cfg.validate()

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def paper_config() -> RunConfig:
    """Dimensions and schedule as published."""
    return RunConfig().validate()


def desk_config() -> RunConfig:
    """Reduced dimensions that train in minutes on one CPU core."""
    return RunConfig(
        model=ModelConfig(feature_dim=256, uplift_dim=64, attn_dim=128,
                          lstm_hidden=128, lstm_bidirectional=True, head_hidden=256,
                          head_start="init", fused_softmax=True),
        optim=OptimConfig(lr=2e-4, batch_size=8, epochs=30),
    ).validate()


PRESETS = {"paper": paper_config, "desk": desk_config}


def apply_overrides(cfg: RunConfig, overrides):
    """Apply ``section.key=value`` strings (values parsed as JSON when possible)."""
    d = cfg.to_dict()
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        parts = key.split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config section {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return RunConfig.from_dict(d)
