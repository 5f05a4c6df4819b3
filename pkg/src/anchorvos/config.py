"""Pipeline configuration.

A config file is YAML (JSON is accepted too) holding any subset of the
sections below; everything missing takes its default and unknown keys are
rejected.  A run manifest can be passed wherever a config is expected: its
``config`` block is used, which replays the recorded run.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from anchorvos.anchors import SelectionParams
from anchorvos.backends import JitterParams
from anchorvos.errors import ConfigError
from anchorvos.maskmedia import D4Transform, parse_transforms
from anchorvos.tracker import TrackerParams

CONFIG_ENV = "ANCHORVOS_CONFIG"


@dataclass
class PoolConfig:
    transforms: list[str] = field(default_factory=lambda: [t.value for t in D4Transform])
    patch_side: int = 16
    pad_ratio: float = 0.1


@dataclass
class SelectConfig:
    k: int = 3
    theta: float = 0.5
    delta: int = 15


@dataclass
class TrackerConfig:
    tau_track: float = 0.6
    tau_mem: float = 0.8
    mem_capacity: int = 4


@dataclass
class MetricsConfig:
    boundary_tol: Optional[float] = None  # None: ceil(0.8% of the image diagonal)


@dataclass
class OracleConfig:
    jitter_radius: int = 0
    drop_prob: float = 0.0


@dataclass
class SynthConfig:
    width: int = 128
    height: int = 128
    num_frames: int = 120


@dataclass
class PipelineConfig:
    pool: PoolConfig = field(default_factory=PoolConfig)
    select: SelectConfig = field(default_factory=SelectConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seed: int = 0

    def transforms(self) -> tuple[D4Transform, ...]:
        return parse_transforms(self.pool.transforms)

    def selection(self) -> SelectionParams:
        return SelectionParams(self.select.k, self.select.theta, self.select.delta)

    def tracker_params(self) -> TrackerParams:
        t = self.tracker
        return TrackerParams(t.tau_track, t.tau_mem, t.mem_capacity, self.pool.pad_ratio, self.pool.patch_side)

    def jitter(self) -> JitterParams:
        return JitterParams(self.oracle.jitter_radius, self.oracle.drop_prob, self.seed)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self) -> "PipelineConfig":
        try:
            self.transforms()
            self.selection()
            self.tracker_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.pool.patch_side < 1 or not 0 <= self.pool.pad_ratio:
            raise ConfigError("pool.patch_side must be >= 1 and pool.pad_ratio >= 0")
        if self.oracle.jitter_radius < 0 or not 0.0 <= self.oracle.drop_prob <= 1.0:
            raise ConfigError("oracle.jitter_radius must be >= 0 and oracle.drop_prob in [0, 1]")
        if self.metrics.boundary_tol is not None and self.metrics.boundary_tol < 0:
            raise ConfigError("metrics.boundary_tol must be >= 0")
        return self


def _coerce(value: Any, default: Any, where: str) -> Any:
    if isinstance(default, bool) or isinstance(value, bool):
        if type(value) is not type(default):
            raise ConfigError(f"{where}: expected {type(default).__name__}, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if value is None:
            return None
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return list(value)
    return value


def _merge(obj, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key {where + '.' if where else ''}{key}")
        current = getattr(obj, key)
        path = f"{where}.{key}" if where else key
        if dataclasses.is_dataclass(current):
            _merge(current, value, path)
        else:
            setattr(obj, key, _coerce(value, current, path))
    return obj


def from_mapping(data: Optional[dict]) -> PipelineConfig:
    if data and data.get("kind") == "run_manifest":
        data = data.get("config", {})
    return _merge(PipelineConfig(), data or {}, "").validate()


def load_config(path=None) -> PipelineConfig:
    """Load ``path``, else the file named by ``$ANCHORVOS_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return from_mapping(data)
