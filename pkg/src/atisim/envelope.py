"""Reflex layer: motion/illuminance-bounded exposure and ISO plus the safety envelope.

Everything here is a pure function of immutable parameter objects. The
:class:`ReflexController` wraps the same functions behind a scikit-learn
transformer so batches of sensor readings can be mapped to baseline settings.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_ascending,
    check_finite_nonneg,
    check_positive,
    check_sensor_matrix,
)

logger = logging.getLogger(__name__)

EXP_DEF = 1.0 / 60.0
_REL_TOL = 1e-9

DEFAULT_EXPOSURES = (1 / 1000, 1 / 500, 1 / 250, 1 / 125, 1 / 60, 1 / 30, 1 / 15)
DEFAULT_ISOS = (50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0)
# (upper lux bound, exclusive) -> value; the last band is open-ended.
DEFAULT_LUX_FLOOR = ((25.0, 1 / 30), (60.0, 1 / 60), (math.inf, 1 / 1000))
DEFAULT_ISO_CAP = ((15.0, 3200.0), (25.0, 1600.0), (60.0, 800.0), (150.0, 400.0), (math.inf, 200.0))


@dataclass(frozen=True)
class SettingGrids:
    exposure_steps: tuple = DEFAULT_EXPOSURES
    iso_steps: tuple = DEFAULT_ISOS

    def __post_init__(self):
        object.__setattr__(self, "exposure_steps", check_ascending(self.exposure_steps, "exposure_steps"))
        object.__setattr__(self, "iso_steps", check_ascending(self.iso_steps, "iso_steps"))
        if any(v <= 0 for v in self.exposure_steps + self.iso_steps):
            raise ValueError("grid values must be positive")

    @property
    def n_exp(self) -> int:
        return len(self.exposure_steps)

    @property
    def n_iso(self) -> int:
        return len(self.iso_steps)

    def exposure(self, idx: int) -> float:
        return self.exposure_steps[idx]

    def iso(self, idx: int) -> float:
        return self.iso_steps[idx]

    def nearest_exposure_index(self, seconds: float) -> int:
        return _nearest_log_index(self.exposure_steps, seconds)

    def nearest_iso_index(self, iso: float) -> int:
        return _nearest_log_index(self.iso_steps, iso)


def _nearest_log_index(steps: tuple, value: float) -> int:
    """Nearest grid index in log space; ties go to the lower (safer) index."""
    if value <= steps[0]:
        return 0
    if value >= steps[-1]:
        return len(steps) - 1
    hi = bisect.bisect_left(steps, value)
    lo = hi - 1
    d_lo = math.log(value) - math.log(steps[lo])
    d_hi = math.log(steps[hi]) - math.log(value)
    # tolerance so exact geometric midpoints still count as ties
    return lo if d_lo <= d_hi + 1e-12 else hi


@dataclass(frozen=True)
class MotionSample:
    acc_mag: float = 0.0
    gyro_mag: float = 0.0

    def __post_init__(self):
        check_finite_nonneg(self.acc_mag, "acc_mag")
        check_finite_nonneg(self.gyro_mag, "gyro_mag")


@dataclass(frozen=True)
class LightSample:
    lux: float

    def __post_init__(self):
        check_finite_nonneg(self.lux, "lux")


@dataclass(frozen=True)
class SensorSetting:
    exp_idx: int
    iso_idx: int

    def within(self, grids: SettingGrids) -> bool:
        return 0 <= self.exp_idx < grids.n_exp and 0 <= self.iso_idx < grids.n_iso


@dataclass(frozen=True)
class EnvelopeParams:
    k_max_blur: float = 4.0
    c_blur_acc: float = 120.0
    c_blur_gyro: float = 120.0
    lux_floor_table: tuple = DEFAULT_LUX_FLOOR
    iso_cap_table: tuple = DEFAULT_ISO_CAP
    exp_def: float = EXP_DEF
    b_sat: float = 1.5
    k_cam: float = 0.4

    def __post_init__(self):
        for name in ("k_max_blur", "c_blur_acc", "c_blur_gyro", "b_sat", "k_cam"):
            check_positive(getattr(self, name), name)
        if not math.isclose(self.exp_def, EXP_DEF, rel_tol=1e-12):
            raise ValueError(f"exp_def must be 1/60 s, got {self.exp_def}")
        floor = _check_band_table(self.lux_floor_table, "lux_floor_table")
        cap = _check_band_table(self.iso_cap_table, "iso_cap_table")
        if floor[0][0] > 25.0:
            raise ValueError("the lowest lux_floor_table band must end at or below 25 lux")
        object.__setattr__(self, "lux_floor_table", floor)
        object.__setattr__(self, "iso_cap_table", cap)


def _check_band_table(table, name: str) -> tuple:
    rows = tuple((float(t), float(v)) for t, v in table)
    check_ascending([t for t, _ in rows], f"{name} thresholds", min_len=1)
    if rows[-1][0] != math.inf:
        rows = rows + ((math.inf, rows[-1][1]),)
    return rows


def _band_lookup(table: tuple, lux: float) -> float:
    # Upper bound is exclusive: lux == threshold belongs to the next band.
    for upper, value in table:
        if lux < upper:
            return value
    return table[-1][1]


@dataclass(frozen=True)
class SafetyEnvelope:
    min_exp_idx: int
    max_exp_idx: int
    max_iso_idx: int

    def __post_init__(self):
        if self.min_exp_idx > self.max_exp_idx:
            raise ValueError("min_exp_idx must not exceed max_exp_idx")

    def contains(self, s: SensorSetting) -> bool:
        return self.min_exp_idx <= s.exp_idx <= self.max_exp_idx and 0 <= s.iso_idx <= self.max_iso_idx


def t_safe_motion(m: MotionSample, p: EnvelopeParams) -> float:
    """Longest exposure keeping motion blur within ``k_max_blur`` pixels."""
    t_acc = p.k_max_blur / (p.c_blur_acc * m.acc_mag) if m.acc_mag > 0 else math.inf
    t_gyro = p.k_max_blur / (p.c_blur_gyro * m.gyro_mag) if m.gyro_mag > 0 else math.inf
    return min(t_acc, t_gyro)


def t_safe_lux(l: LightSample, p: EnvelopeParams) -> float:
    return _band_lookup(p.lux_floor_table, l.lux)


def iso_cap(l: LightSample, p: EnvelopeParams) -> float:
    return _band_lookup(p.iso_cap_table, l.lux)


def iso_default(l: LightSample, p: EnvelopeParams, g: Optional[SettingGrids] = None) -> float:
    """ISO giving relative brightness 1.0 at the reference exposure (continuous, grid-clamped)."""
    g = g or SettingGrids()
    denom = l.lux * p.exp_def * p.k_cam
    if denom <= 0:
        return g.iso_steps[-1]
    iso = 100.0 / denom
    return min(max(iso, g.iso_steps[0]), g.iso_steps[-1])


def iso_for_exposure(l: LightSample, exposure: float, p: EnvelopeParams,
                     g: Optional[SettingGrids] = None) -> float:
    """Pre-cap continuous ISO for a given exposure: ISO_def * Exp_def / Exp."""
    return iso_default(l, p, g) * p.exp_def / exposure


def saturation_exposure(l: LightSample, p: EnvelopeParams, g: SettingGrids) -> float:
    """Exposure at which the lowest ISO reaches the saturation brightness ``b_sat``."""
    denom = l.lux * (g.iso_steps[0] / 100.0) * p.k_cam
    # denom can underflow to 0 for subnormal lux
    return p.b_sat / denom if denom > 0 else math.inf


def continuous_baseline(m: MotionSample, l: LightSample, p: EnvelopeParams,
                        g: SettingGrids) -> tuple[float, float]:
    """Continuous (exposure seconds, ISO) before grid snapping."""
    floor = t_safe_lux(l, p)
    exp_t = max(t_safe_motion(m, p), floor)
    # anti-saturation cap, but the illuminance floor keeps priority
    exp_t = max(min(exp_t, saturation_exposure(l, p, g)), floor)
    exp_t = min(max(exp_t, g.exposure_steps[0]), g.exposure_steps[-1])
    iso_t = min(iso_for_exposure(l, exp_t, p, g), iso_cap(l, p))
    return exp_t, iso_t


def safety_envelope(m: MotionSample, l: LightSample, p: EnvelopeParams,
                    g: SettingGrids) -> SafetyEnvelope:
    # motion does not enter the envelope; it only shapes the baseline
    floor = t_safe_lux(l, p)
    exps = g.exposure_steps
    min_exp = next((i for i, e in enumerate(exps) if e >= floor * (1 - _REL_TOL)), len(exps) - 1)

    e_sat = saturation_exposure(l, p, g)
    below = [i for i, e in enumerate(exps) if e <= e_sat * (1 + _REL_TOL)]
    max_exp = below[-1] if below else 0
    if max_exp < min_exp:
        max_exp = min_exp

    cap = iso_cap(l, p)
    allowed = [i for i, v in enumerate(g.iso_steps) if v <= cap * (1 + _REL_TOL)]
    max_iso = allowed[-1] if allowed else 0
    return SafetyEnvelope(min_exp_idx=min_exp, max_exp_idx=max_exp, max_iso_idx=max_iso)


def clamp_to_envelope(s: SensorSetting, env: SafetyEnvelope) -> SensorSetting:
    exp_idx = min(max(s.exp_idx, env.min_exp_idx), env.max_exp_idx)
    iso_idx = min(max(s.iso_idx, 0), env.max_iso_idx)
    if exp_idx == s.exp_idx and iso_idx == s.iso_idx:
        return s
    return SensorSetting(exp_idx, iso_idx)


def baseline_setting(m: MotionSample, l: LightSample, p: EnvelopeParams,
                     g: SettingGrids) -> SensorSetting:
    exp_t, iso_t = continuous_baseline(m, l, p, g)
    snapped = SensorSetting(g.nearest_exposure_index(exp_t), g.nearest_iso_index(iso_t))
    return clamp_to_envelope(snapped, safety_envelope(m, l, p, g))


class SensorControl:
    """Camera-side control primitives.

    Only shutter and gain have behaviour in the simulator; gimbal, HDR and ROI
    are accepted and ignored so callers can be written against the full
    surface.
    """

    def __init__(self, grids: Optional[SettingGrids] = None,
                 setting: Optional[SensorSetting] = None):
        self.grids = grids or SettingGrids()
        self.setting = setting or SensorSetting(
            self.grids.nearest_exposure_index(EXP_DEF), self.grids.nearest_iso_index(100.0))

    def set_shutter(self, seconds: float) -> SensorSetting:
        self.setting = SensorSetting(self.grids.nearest_exposure_index(seconds), self.setting.iso_idx)
        return self.setting

    def set_gain(self, iso: float) -> SensorSetting:
        self.setting = SensorSetting(self.setting.exp_idx, self.grids.nearest_iso_index(iso))
        return self.setting

    def apply(self, setting: SensorSetting) -> SensorSetting:
        if not setting.within(self.grids):
            raise ValueError(f"setting {setting} outside the hardware grid")
        self.setting = setting
        return setting

    def slew_gimbal(self, pan: float, tilt: float) -> bool:
        logger.debug("slew_gimbal(%s, %s) ignored: no gimbal", pan, tilt)
        return False

    def set_hdr(self, enabled: bool) -> bool:
        logger.debug("set_hdr(%s) ignored: no HDR pipeline", enabled)
        return False

    def set_roi(self, box) -> bool:
        logger.debug("set_roi(%s) ignored: full-frame capture only", box)
        return False


class ReflexController(TransformerMixin, BaseEstimator):
    """Map raw (acc_mag, gyro_mag, lux) readings to reflexive baseline settings.

    ``transform`` returns an ``(n, 2)`` integer array of
    ``(exp_idx, iso_idx)``; :meth:`envelope` returns ``(n, 3)`` rows of
    ``(min_exp_idx, max_exp_idx, max_iso_idx)``.
    """

    def __init__(self, k_max_blur=4.0, c_blur_acc=120.0, c_blur_gyro=120.0,
                 lux_floor_table=DEFAULT_LUX_FLOOR, iso_cap_table=DEFAULT_ISO_CAP,
                 b_sat=1.5, k_cam=0.4, exposure_steps=DEFAULT_EXPOSURES,
                 iso_steps=DEFAULT_ISOS):
        self.k_max_blur = k_max_blur
        self.c_blur_acc = c_blur_acc
        self.c_blur_gyro = c_blur_gyro
        self.lux_floor_table = lux_floor_table
        self.iso_cap_table = iso_cap_table
        self.b_sat = b_sat
        self.k_cam = k_cam
        self.exposure_steps = exposure_steps
        self.iso_steps = iso_steps

    def fit(self, X=None, y=None):
        self.params_ = EnvelopeParams(
            k_max_blur=self.k_max_blur, c_blur_acc=self.c_blur_acc, c_blur_gyro=self.c_blur_gyro,
            lux_floor_table=self.lux_floor_table, iso_cap_table=self.iso_cap_table,
            b_sat=self.b_sat, k_cam=self.k_cam)
        self.grids_ = SettingGrids(tuple(self.exposure_steps), tuple(self.iso_steps))
        if X is not None:
            self.n_features_in_ = check_sensor_matrix(X, 3).shape[1]
        return self

    def _samples(self, X):
        check_is_fitted(self, "params_")
        X = check_sensor_matrix(X, 3)
        return [(MotionSample(a, g), LightSample(lux)) for a, g, lux in X]

    def transform(self, X):
        out = [baseline_setting(m, l, self.params_, self.grids_) for m, l in self._samples(X)]
        return np.array([[s.exp_idx, s.iso_idx] for s in out], dtype=np.int64).reshape(-1, 2)

    def envelope(self, X):
        out = [safety_envelope(m, l, self.params_, self.grids_) for m, l in self._samples(X)]
        return np.array([[e.min_exp_idx, e.max_exp_idx, e.max_iso_idx] for e in out],
                        dtype=np.int64).reshape(-1, 3)

    def clamp(self, settings, envelopes):
        settings = np.asarray(settings, dtype=np.int64).reshape(-1, 2)
        envelopes = np.asarray(envelopes, dtype=np.int64).reshape(-1, 3)
        exp = np.clip(settings[:, 0], envelopes[:, 0], envelopes[:, 1])
        iso = np.clip(settings[:, 1], 0, envelopes[:, 2])
        return np.column_stack([exp, iso])
