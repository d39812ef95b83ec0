"""Experiment configuration: nested parameter blocks loaded from YAML."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..calibrator import ContextBins, RewardParams
from ..envelope import EnvelopeParams, SettingGrids
from ..errors import ConfigError
from ..percept import OBJECT_CLASSES, LocalOracleParams, RemoteOracleParams
from ..router import NetworkState, RoutingThresholds
from ..sensecam import CameraModelParams, EnvTrajectory

SENSING_MODES = ("AE", "L1", "L1_L2_learning", "L1_L2_inference")
INFERENCE_MODES = ("L3_only", "L4_only", "L3_L4_split")


@dataclass(frozen=True)
class BanditParams:
    eps0: float = 1.0
    eps_tau: float = 20.0
    min_visits: int = 10
    stability_window: int = 5
    history_len: int = 10


@dataclass(frozen=True)
class ObjectSpec:
    """Which object classes appear; laps cycle through ``classes`` in order."""

    classes: tuple = ("teddy",)
    difficulty: dict = field(default_factory=dict)
    object_mean: float = 0.25
    texture_sd: float = 0.1
    background: float = 0.8

    def __post_init__(self):
        if not self.classes:
            raise ValueError("classes must not be empty")
        object.__setattr__(self, "classes", tuple(str(c) for c in self.classes))
        for c, d in self.difficulty.items():
            if c not in self.classes:
                raise ValueError(f"difficulty given for unknown class {c!r}")
            if not 0.0 <= float(d) <= 1.0:
                raise ValueError(f"difficulty for {c!r} must lie in [0, 1]")

    def class_for_lap(self, lap: int) -> str:
        return self.classes[lap % len(self.classes)]


# block name -> dataclass
_BLOCKS = {
    "scenario": EnvTrajectory,
    "envelope": EnvelopeParams,
    "grids": SettingGrids,
    "camera": CameraModelParams,
    "bins": ContextBins,
    "bandit": BanditParams,
    "reward": RewardParams,
    "local": LocalOracleParams,
    "remote": RemoteOracleParams,
    "thresholds": RoutingThresholds,
    "network": NetworkState,
    "objects": ObjectSpec,
}


@dataclass(frozen=True)
class ExperimentConfig:
    sensing_mode: str = "L1"
    inference_mode: str = "L3_L4_split"
    seed: int = 2025
    laps: int = 50
    # extra remote delay on top of RTT + inference latency (late-arrival injection)
    remote_extra_delay_ms: float = 0.0
    policy_path: Optional[str] = None
    scenario: EnvTrajectory = field(default_factory=EnvTrajectory)
    envelope: EnvelopeParams = field(default_factory=EnvelopeParams)
    grids: SettingGrids = field(default_factory=SettingGrids)
    camera: CameraModelParams = field(default_factory=CameraModelParams)
    bins: ContextBins = field(default_factory=ContextBins)
    bandit: BanditParams = field(default_factory=BanditParams)
    reward: RewardParams = field(default_factory=RewardParams)
    local: LocalOracleParams = field(default_factory=LocalOracleParams)
    remote: RemoteOracleParams = field(default_factory=RemoteOracleParams)
    thresholds: RoutingThresholds = field(default_factory=RoutingThresholds)
    network: NetworkState = field(default_factory=NetworkState)
    objects: ObjectSpec = field(default_factory=ObjectSpec)

    def __post_init__(self):
        if self.sensing_mode not in SENSING_MODES:
            raise ConfigError(f"sensing_mode: expected one of {SENSING_MODES}, got {self.sensing_mode!r}")
        if self.inference_mode not in INFERENCE_MODES:
            raise ConfigError(f"inference_mode: expected one of {INFERENCE_MODES}, got {self.inference_mode!r}")
        if int(self.laps) < 1:
            raise ConfigError(f"laps: must be >= 1, got {self.laps}")
        if self.remote_extra_delay_ms < 0:
            raise ConfigError("remote_extra_delay_ms: must be >= 0")
        if not math.isclose(self.envelope.k_cam, self.camera.k_cam):
            raise ConfigError("camera.k_cam: must equal envelope.k_cam")

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        """Copy with top-level fields or dotted block fields (``"thresholds.tau_conf"``) replaced."""
        top, nested = {}, {}
        for key, value in kwargs.items():
            if "." in key:
                block, name = key.split(".", 1)
                nested.setdefault(block, {})[name] = value
            else:
                top[key] = value
        for block, values in nested.items():
            if block not in _BLOCKS:
                raise ConfigError(f"{block}: unknown parameter block")
            top[block] = _build_block(block, {**_block_dict(getattr(self, block)), **values})
        try:
            return dataclasses.replace(self, **top)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = _block_dict(v) if f.name in _BLOCKS else v
        return out


def _block_dict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def _to_tuple(value):
    if isinstance(value, list):
        return tuple(_to_tuple(v) for v in value)
    return value


def _build_block(name: str, values: Any):
    cls = _BLOCKS[name]
    if not isinstance(values, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(values).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown field")
    try:
        return cls(**{k: _to_tuple(v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
        kwargs[key] = _build_block(key, value) if key in _BLOCKS else value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: file not found") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    cfg = config_from_dict(data or {})
    if cfg.policy_path and not Path(cfg.policy_path).is_absolute():
        cfg = dataclasses.replace(cfg, policy_path=str(path.parent / cfg.policy_path))
    return cfg


def dump_config(cfg: ExperimentConfig, path) -> Path:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v

    path = Path(path)
    path.write_text(yaml.safe_dump(plain(cfg.to_dict()), sort_keys=False))
    return path


def all_objects() -> ObjectSpec:
    return ObjectSpec(classes=OBJECT_CLASSES)
