"""Pipeline configuration: nested dataclasses loaded from a JSON file.

Every key has a default, so ``{}`` is a valid config. Unknown keys are
rejected. Example::

    {
      "tracker": {"tau_d": 0.6, "weights": {"w_a": 0.25, "w_s": 0.25, "w_p": 0.25, "w_k": 0.25}},
      "speed": {"fps": 30, "stall_px": 2.0},
      "conflict": {"theta_min": 35, "f": 30},
      "evaluation": {"t_tol": 60},
      "io": {"input": "stream.jsonl", "calibration": "calib.json"}
    }
"""

from __future__ import annotations

import copy
import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

from .conflict import ConflictConfig
from .costs import CostWeights
from .ingest import HIST_LENGTH
from .kalman import KalmanNoise
from .tracker import TrackerConfig


class ConfigError(ValueError):
    pass


@dataclass
class SpeedConfig:
    fps: float = 30.0
    stall_px: float = 2.0

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if self.stall_px < 0:
            raise ValueError("stall_px must be non-negative")


@dataclass
class EvaluationConfig:
    t_tol: int = 60

    def __post_init__(self):
        if self.t_tol < 0:
            raise ValueError("t_tol must be non-negative")


@dataclass
class IOConfig:
    input: Optional[str] = None
    output: Optional[str] = None
    calibration: Optional[str] = None
    truth: Optional[str] = None


@dataclass
class PipelineConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    speed: SpeedConfig = field(default_factory=SpeedConfig)
    conflict: ConflictConfig = field(default_factory=ConflictConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    io: IOConfig = field(default_factory=IOConfig)
    seed: int = 0
    queue_size: int = 64
    min_confidence: float = 0.0
    hist_bins: int = HIST_LENGTH

    def __post_init__(self):
        if self.hist_bins < 2:
            raise ValueError("hist_bins must be at least 2")
        if self.queue_size < 1:
            raise ValueError("queue_size must be positive")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must lie in [0, 1]")
        if self.tracker.history_len < self.conflict.f:
            # history must cover the shared motion window
            self.tracker.history_len = self.conflict.f

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_NESTED = {
    PipelineConfig: {
        "tracker": TrackerConfig,
        "speed": SpeedConfig,
        "conflict": ConflictConfig,
        "evaluation": EvaluationConfig,
        "io": IOConfig,
    },
    TrackerConfig: {"weights": CostWeights, "kalman": KalmanNoise},
}
_TUPLES = {KalmanNoise: ("meas_var", "process_var_velocity")}


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get(cls, {}).get(key)
        where = f"{path}.{key}" if path else key
        if sub is not None:
            kwargs[key] = _build(sub, value, where)
        elif key in _TUPLES.get(cls, ()):
            if not isinstance(value, list):
                raise ConfigError(f"{where}: expected a list")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def config_from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "")


def load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    cfg = config_from_dict(data)
    check_paths(cfg)
    return cfg


def check_paths(cfg: PipelineConfig) -> None:
    for key in ("input", "calibration", "truth"):
        p = getattr(cfg.io, key)
        if p is not None and p != "-" and not os.path.exists(p):
            raise ConfigError(f"io.{key}: file not found: {p}")


def with_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Copy of ``cfg`` with dotted-key overrides, e.g. ``{"conflict.theta_min": 179}``."""
    data = copy.deepcopy(cfg.to_dict())
    for dotted, value in overrides.items():
        node = data
        parts = dotted.split(".")
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"unknown config key {dotted}")
            node = node[p]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"unknown config key {dotted}")
        node[parts[-1]] = value
    _listify(data)
    return config_from_dict(data)


def _listify(d):
    for k, v in d.items():
        if isinstance(v, dict):
            _listify(v)
        elif isinstance(v, tuple):
            d[k] = list(v)
