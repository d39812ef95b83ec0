"""Small input checks shared by the estimators and the harness."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from sklearn.utils.validation import check_array


def check_finite_nonneg(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    return value


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    return value


def check_unit_interval(value: float, name: str, *, open_: bool = False) -> float:
    value = float(value)
    ok = (0.0 < value < 1.0) if open_ else (0.0 <= value <= 1.0)
    if not ok:
        bounds = "(0, 1)" if open_ else "[0, 1]"
        raise ValueError(f"{name} must lie in {bounds}, got {value!r}")
    return value


def check_ascending(values: Sequence[float], name: str, *, min_len: int = 2) -> tuple:
    vals = tuple(float(v) for v in values)
    if len(vals) < min_len:
        raise ValueError(f"{name} needs at least {min_len} entries, got {len(vals)}")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError(f"{name} must be strictly ascending: {vals}")
    return vals


def check_sensor_matrix(X, n_features: int, name: str = "X") -> np.ndarray:
    """Validate a 2-D float array of non-negative sensor readings."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != n_features:
        raise ValueError(f"{name} must have {n_features} columns, got {X.shape[1]}")
    if np.any(X < 0):
        raise ValueError(f"{name} contains negative sensor readings")
    return X


def check_int_matrix(X, n_features: int, name: str = "X") -> np.ndarray:
    X = check_array(X, dtype=None, ensure_2d=True)
    if X.shape[1] != n_features:
        raise ValueError(f"{name} must have {n_features} columns, got {X.shape[1]}")
    if not np.all(np.equal(np.mod(X, 1), 0)):
        raise ValueError(f"{name} must contain integers")
    return X.astype(np.int64)
