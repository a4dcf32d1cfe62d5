"""Pipeline configuration: a single JSON document with defaults for every field."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .learning import TrainConfig
from .patching import generate_view_directions

BIAS_MODES = ("none", "constant", "single", "multi")
BACKENDS = ("contrast", "file")


@dataclass
class PipelineConfig:
    """Everything a pipeline run needs, all fields optional in the JSON file."""

    erp_size: tuple[int, int] = (800, 1600)  # (rows, cols)
    patch_size: tuple[int, int] = (500, 500)  # (W, H)
    interval_deg: float = 45.0
    aovs_deg: tuple[float, ...] = (100.0, 110.0, 120.0)
    arch: int = 4
    bias_mode: str = "multi"
    backend: str = "contrast"
    backend_dir: str | None = None
    bias_grid_shape: tuple[int, int] = (20, 20)
    bias_elevations_deg: tuple[float, ...] = (-90.0, -45.0, 0.0, 45.0, 90.0)
    hidden_channels: int = 8
    lr_bias: float = 1e-4
    lr_attention: float = 1e-5
    epochs: int = 5
    max_steps: int | None = None
    seed: int = 0
    threads: int = 1
    sampler: str = "bilinear"
    eval_band_deg: float = 30.0

    def __post_init__(self):
        self.erp_size = tuple(int(v) for v in self.erp_size)
        self.patch_size = tuple(int(v) for v in self.patch_size)
        self.aovs_deg = tuple(float(v) for v in self.aovs_deg)
        self.bias_grid_shape = tuple(int(v) for v in self.bias_grid_shape)
        self.bias_elevations_deg = tuple(float(v) for v in self.bias_elevations_deg)
        self.validate()

    def validate(self) -> None:
        if len(self.erp_size) != 2 or min(self.erp_size) < 2:
            raise ConfigError(f"erp_size must be two values >= 2, got {self.erp_size}")
        if len(self.patch_size) != 2 or min(self.patch_size) < 2:
            raise ConfigError(f"patch_size must be two values >= 2, got {self.patch_size}")
        generate_view_directions(math.radians(self.interval_deg))
        if not self.aovs_deg:
            raise ConfigError("at least one angle of view is required")
        if any(not 0.0 < a < 180.0 for a in self.aovs_deg):
            raise ConfigError(f"angles of view must lie in (0, 180) degrees, got {self.aovs_deg}")
        if any(b <= a for a, b in zip(self.aovs_deg, self.aovs_deg[1:])):
            raise ConfigError(f"angles of view must be strictly increasing, got {self.aovs_deg}")
        if self.arch not in (1, 2, 3, 4):
            raise ConfigError(f"arch must be one of 1..4, got {self.arch}")
        if self.bias_mode not in BIAS_MODES:
            raise ConfigError(f"bias_mode must be one of {BIAS_MODES}, got {self.bias_mode!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == "file" and not self.backend_dir:
            raise ConfigError("backend 'file' requires backend_dir")
        if min(self.bias_grid_shape) < 2:
            raise ConfigError(f"bias grid must be >= 2 per axis, got {self.bias_grid_shape}")
        if self.hidden_channels < 1:
            raise ConfigError("hidden_channels must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.sampler not in ("bilinear", "nearest"):
            raise ConfigError(f"sampler must be bilinear or nearest, got {self.sampler!r}")
        # Delegate the learning-rate/epoch checks.
        self.train_config()

    @property
    def interval(self) -> float:
        return math.radians(self.interval_deg)

    @property
    def aovs(self) -> tuple[float, ...]:
        return tuple(math.radians(a) for a in self.aovs_deg)

    @property
    def n_scales(self) -> int:
        return len(self.aovs_deg)

    def train_config(self, **overrides) -> TrainConfig:
        kwargs = {
            "lr_bias": self.lr_bias,
            "lr_attention": self.lr_attention,
            "epochs": self.epochs,
            "max_steps": self.max_steps,
            "seed": self.seed,
        }
        kwargs.update(overrides)
        return TrainConfig(**kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config root must be a JSON object")
        return cls.from_dict(data)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **changes) -> "PipelineConfig":
        data = self.as_dict()
        data.update(changes)
        return PipelineConfig.from_dict(data)
