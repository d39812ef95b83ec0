"""Baseline auto-exposure: a brightness-only step controller."""

from __future__ import annotations

from ..envelope import SensorSetting, SettingGrids

AE_TARGET = 0.5
AE_DEADBAND = 0.1


def autoexposure_step(prev: SensorSetting, mean_brightness: float, g: SettingGrids,
                      target: float = AE_TARGET, deadband: float = AE_DEADBAND) -> SensorSetting:
    """One AE step toward ``target`` mean brightness.

    Exposure moves first (one index per frame); gain only moves once exposure
    is pinned at a grid bound. Motion is ignored by design.
    """
    if not 0.0 <= mean_brightness <= 1.0:
        raise ValueError(f"mean brightness must lie in [0, 1], got {mean_brightness}")
    err = target - mean_brightness
    if abs(err) <= deadband:
        return prev
    step = 1 if err > 0 else -1
    exp_idx = prev.exp_idx + step
    if 0 <= exp_idx < g.n_exp:
        return SensorSetting(exp_idx, prev.iso_idx)
    iso_idx = min(max(prev.iso_idx + step, 0), g.n_iso - 1)
    return SensorSetting(prev.exp_idx, iso_idx)
