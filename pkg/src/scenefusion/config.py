"""Run configuration with desk-scale defaults and the production-sized preset.

Desk-scale numbers keep everything CPU-trainable in minutes; the production
preset records the full-scale dimensioning (1030-dim point vectors projected
through 768 to a 768-wide model, voxel resolution 0.18 m, 20 views per scene)
and is untested at that scale here.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields

from .align.training import TrainConfig
from .errors import ConfigError

ENV_CONFIG_PATH = "SCENEFUSION_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    resolution: float = 0.18
    knn_k: int = 5
    feature_dim: int = 16
    h: int = 32
    h_mid: int = 32
    n_layers: int = 2
    n_heads: int = 2
    max_len: int = 512
    n_views: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if self.feature_dim < 4:
            raise ConfigError("feature_dim must be >= 4")

    @property
    def proj_in(self) -> int:
        return self.feature_dim + 3

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        known = {f.name for f in fields(RunConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return RunConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "desk": RunConfig(),
    # Full-scale dimensioning: 1027 + 3 = 1030 projection input, 768 wide.
    "production": RunConfig(
        feature_dim=1027, h=768, h_mid=768, n_layers=24, n_heads=12, max_len=4096
    ),
}

# Full-scale training schedules (batch 64, AdamW, linear warmup from 1e-6).
PRODUCTION_STAGE1 = TrainConfig(
    stage="stage1", lr=1e-5, warmup_steps=1000, warmup_lr=1e-6, batch_size=64, steps=6000
)
PRODUCTION_STAGE2 = TrainConfig(
    stage="stage2", lr=2e-5, warmup_steps=2000, warmup_lr=1e-6, batch_size=64, steps=6000
)


def load_config(path=None) -> RunConfig:
    """Load a config JSON; falls back to $SCENEFUSION_CONFIG, then defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH)
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as f:
        return RunConfig.from_dict(json.load(f))


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=1, sort_keys=True)
