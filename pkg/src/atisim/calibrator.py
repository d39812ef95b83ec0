"""Contextual bandit calibration around the reflex baseline.

A tabular epsilon-greedy bandit over 25 (motion, light) contexts and the
nine index offsets {-1, 0, +1}^2 of (ISO, exposure). Rewards arrive once per
lap; stable context -> action associations can be frozen into a lookup table
that is consulted before any exploration.
"""

from __future__ import annotations

import bisect
import csv
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_ascending, check_finite_nonneg, check_int_matrix, check_positive, check_unit_interval
from .envelope import LightSample, MotionSample, SafetyEnvelope, SensorSetting, SettingGrids, clamp_to_envelope
from .errors import DataError, EmptyLapError

logger = logging.getLogger(__name__)

N_BINS = 5
N_CONTEXTS = N_BINS * N_BINS
DEFAULT_LIGHT_EDGES = (15.0, 25.0, 60.0, 150.0)
DEFAULT_MOTION_EDGES = (0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True, order=True)
class SensingContext:
    motion_bin: int
    light_bin: int

    def __post_init__(self):
        for name in ("motion_bin", "light_bin"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and 0 <= v < N_BINS):
                raise ValueError(f"{name} must be an integer in [0, {N_BINS - 1}], got {v!r}")
        object.__setattr__(self, "motion_bin", int(self.motion_bin))
        object.__setattr__(self, "light_bin", int(self.light_bin))

    @property
    def index(self) -> int:
        return self.motion_bin * N_BINS + self.light_bin

    @classmethod
    def from_index(cls, idx: int) -> "SensingContext":
        return cls(*divmod(int(idx), N_BINS))


ALL_CONTEXTS = tuple(SensingContext.from_index(i) for i in range(N_CONTEXTS))


@dataclass(frozen=True)
class CalibAction:
    d_iso: int = 0
    d_exp: int = 0

    def __post_init__(self):
        if self.d_iso not in (-1, 0, 1) or self.d_exp not in (-1, 0, 1):
            raise ValueError(f"action offsets must be in {{-1, 0, 1}}, got {self!r}")
        object.__setattr__(self, "d_iso", int(self.d_iso))
        object.__setattr__(self, "d_exp", int(self.d_exp))

    @property
    def index(self) -> int:
        return ACTIONS.index(self)

    @property
    def magnitude(self) -> int:
        return abs(self.d_iso) + abs(self.d_exp)


# enumeration order: d_iso outer, d_exp inner
ACTIONS = tuple(CalibAction(di, de) for di in (-1, 0, 1) for de in (-1, 0, 1))
N_ACTIONS = len(ACTIONS)
# greedy tie-break: smallest offset first, then enumeration order
_TIEBREAK_ORDER = tuple(sorted(range(N_ACTIONS), key=lambda i: (ACTIONS[i].magnitude, i)))


@dataclass(frozen=True)
class ContextBins:
    light_edges: tuple = DEFAULT_LIGHT_EDGES
    motion_edges: tuple = DEFAULT_MOTION_EDGES
    # motion is normalized per channel before binning
    acc_ref: float = 2.0
    gyro_ref: float = 1.0

    def __post_init__(self):
        for name in ("light_edges", "motion_edges"):
            edges = check_ascending(getattr(self, name), name, min_len=N_BINS - 1)
            if len(edges) != N_BINS - 1:
                raise ValueError(f"{name} needs exactly {N_BINS - 1} edges, got {len(edges)}")
            object.__setattr__(self, name, edges)
        check_positive(self.acc_ref, "acc_ref")
        check_positive(self.gyro_ref, "gyro_ref")


@dataclass(frozen=True)
class RewardParams:
    alpha: float = 0.9
    v_ref: float = 100.0

    def __post_init__(self):
        check_unit_interval(self.alpha, "alpha")
        check_positive(self.v_ref, "v_ref")


def normalized_motion(m: MotionSample, bins: ContextBins) -> float:
    return max(m.acc_mag / bins.acc_ref, m.gyro_mag / bins.gyro_ref)


def discretize_context(m: MotionSample, l: LightSample, bins: ContextBins = ContextBins()) -> SensingContext:
    # a value equal to an edge counts as above it (lower edge inclusive)
    return SensingContext(
        motion_bin=bisect.bisect_right(bins.motion_edges, normalized_motion(m, bins)),
        light_bin=bisect.bisect_right(bins.light_edges, l.lux),
    )


def compute_reward(lap, rp: RewardParams = RewardParams()) -> float:
    """Lap reward from the peak-confidence frame.

    ``lap`` is anything exposing ``n_frames``, ``peak_conf`` and
    ``peak_sharpness`` (the router's lap summary).
    """
    if getattr(lap, "n_frames", 0) <= 0:
        raise EmptyLapError("cannot compute a reward for a lap without frames")
    return reward_value(lap.peak_conf, lap.peak_sharpness, rp)


def reward_value(conf: float, sharpness: float, rp: RewardParams = RewardParams()) -> float:
    conf = check_unit_interval(conf, "conf")
    sharpness = check_finite_nonneg(sharpness, "sharpness")
    r = rp.alpha * conf + (1.0 - rp.alpha) * min(1.0, sharpness / rp.v_ref)
    return min(1.0, max(0.0, r))


def apply_action(baseline: SensorSetting, a: CalibAction, env: SafetyEnvelope,
                 g: SettingGrids) -> SensorSetting:
    exp_idx = min(max(baseline.exp_idx + a.d_exp, 0), g.n_exp - 1)
    iso_idx = min(max(baseline.iso_idx + a.d_iso, 0), g.n_iso - 1)
    return clamp_to_envelope(SensorSetting(exp_idx, iso_idx), env)


class BanditTable:
    """Running-mean action values for every (context, action) pair."""

    def __init__(self, eps0: float = 1.0, eps_tau: float = 20.0, history_len: int = 10):
        self.eps0 = check_unit_interval(eps0, "eps0")
        self.eps_tau = check_positive(eps_tau, "eps_tau")
        if int(history_len) < 1:
            raise ValueError("history_len must be >= 1")
        self.history_len = int(history_len)
        self.q = np.zeros((N_CONTEXTS, N_ACTIONS))
        self.counts = np.zeros((N_CONTEXTS, N_ACTIONS), dtype=np.int64)
        self.history = [deque(maxlen=self.history_len) for _ in range(N_CONTEXTS)]

    def total_visits(self, c: SensingContext) -> int:
        return int(self.counts[c.index].sum())

    def epsilon(self, c: SensingContext) -> float:
        return self.eps0 / (1.0 + self.total_visits(c) / self.eps_tau)

    def greedy(self, c: SensingContext) -> CalibAction:
        row = self.q[c.index]
        best = row.max()
        for i in _TIEBREAK_ORDER:
            if row[i] == best:
                return ACTIONS[i]
        raise AssertionError("unreachable")

    def select(self, c: SensingContext, rng: np.random.Generator,
               epsilon: Optional[float] = None) -> CalibAction:
        eps = self.epsilon(c) if epsilon is None else epsilon
        if rng.random() < eps:
            return ACTIONS[int(rng.integers(N_ACTIONS))]
        return self.greedy(c)

    def update(self, c: SensingContext, a: CalibAction, r: float) -> float:
        r = check_unit_interval(r, "reward")
        ci, ai = c.index, a.index
        self.counts[ci, ai] += 1
        self.q[ci, ai] += (r - self.q[ci, ai]) / self.counts[ci, ai]
        self.history[ci].append(self.greedy(c))
        return float(self.q[ci, ai])

    def copy(self) -> "BanditTable":
        t = BanditTable(self.eps0, self.eps_tau, self.history_len)
        t.q = self.q.copy()
        t.counts = self.counts.copy()
        t.history = [deque(h, maxlen=self.history_len) for h in self.history]
        return t

    def stable_argmax(self, c: SensingContext, window: int) -> Optional[CalibAction]:
        h = self.history[c.index]
        if window <= 0:
            return self.greedy(c)
        if window > len(h):
            return None
        recent = list(h)[-window:]
        current = self.greedy(c)
        return current if all(a == current for a in recent) else None

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["motion_bin", "light_bin", "d_iso", "d_exp", "q", "count"])
            for c in ALL_CONTEXTS:
                for a in ACTIONS:
                    w.writerow([c.motion_bin, c.light_bin, a.d_iso, a.d_exp,
                                f"{self.q[c.index, a.index]:.17g}", int(self.counts[c.index, a.index])])
        return path

    @classmethod
    def from_csv(cls, path, **kwargs) -> "BanditTable":
        """Restore values and counts; the greedy history restarts empty."""
        t = cls(**kwargs)
        for lineno, row in _read_rows(path, ("motion_bin", "light_bin", "d_iso", "d_exp", "q", "count")):
            try:
                c = SensingContext(int(row["motion_bin"]), int(row["light_bin"]))
                a = CalibAction(int(row["d_iso"]), int(row["d_exp"]))
                t.q[c.index, a.index] = float(row["q"])
                t.counts[c.index, a.index] = int(row["count"])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
        return t


@dataclass(frozen=True)
class PolicyEntry:
    action: CalibAction
    visits: int
    q: float


@dataclass
class ConsolidatedPolicy:
    entries: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, c) -> bool:
        return c in self.entries

    def lookup(self, c: SensingContext) -> Optional[CalibAction]:
        e = self.entries.get(c)
        return None if e is None else e.action

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["motion_bin", "light_bin", "d_iso", "d_exp", "visits", "q"])
            for c in sorted(self.entries):
                e = self.entries[c]
                w.writerow([c.motion_bin, c.light_bin, e.action.d_iso, e.action.d_exp, e.visits, f"{e.q:.6f}"])
        return path

    @classmethod
    def from_csv(cls, path) -> "ConsolidatedPolicy":
        entries = {}
        for lineno, row in _read_rows(path, ("motion_bin", "light_bin", "d_iso", "d_exp", "visits", "q")):
            try:
                c = SensingContext(int(row["motion_bin"]), int(row["light_bin"]))
                entries[c] = PolicyEntry(CalibAction(int(row["d_iso"]), int(row["d_exp"])),
                                         int(row["visits"]), float(row["q"]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
        return cls(entries)


def _read_rows(path, columns: tuple):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != columns:
            raise DataError(f"{path}:1: expected header {','.join(columns)}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def consolidate(t: BanditTable, min_visits: int = 10, stability_window: int = 5) -> ConsolidatedPolicy:
    entries = {}
    for c in ALL_CONTEXTS:
        visits = t.total_visits(c)
        if visits < min_visits:
            continue
        a = t.stable_argmax(c, stability_window)
        if a is None:
            continue
        entries[c] = PolicyEntry(a, visits, float(t.q[c.index, a.index]))
    return ConsolidatedPolicy(entries)


@dataclass(frozen=True)
class CalibrationResult:
    setting: SensorSetting
    action: CalibAction
    from_policy: bool
    epsilon: float


def calibrate(mode: str, baseline: SensorSetting, context: SensingContext, table: BanditTable,
              policy: Optional[ConsolidatedPolicy], env: SafetyEnvelope, g: SettingGrids,
              rng: np.random.Generator) -> CalibrationResult:
    """One calibration step.

    Inference mode uses the frozen policy when it has the context and falls
    back to the greedy table action otherwise; neither path mutates the table.
    """
    if mode == "inference":
        a = policy.lookup(context) if policy is not None else None
        if a is not None:
            return CalibrationResult(apply_action(baseline, a, env, g), a, True, 0.0)
        logger.debug("no consolidated entry for %s; using greedy action", context)
        a = table.greedy(context)
        return CalibrationResult(apply_action(baseline, a, env, g), a, False, 0.0)
    if mode != "learning":
        raise ValueError(f"mode must be 'learning' or 'inference', got {mode!r}")
    eps = table.epsilon(context)
    a = table.select(context, rng, epsilon=eps)
    return CalibrationResult(apply_action(baseline, a, env, g), a, False, eps)


class BanditCalibrator(BaseEstimator):
    """Estimator wrapper around :class:`BanditTable`.

    ``fit``/``partial_fit`` take rows of ``[motion_bin, light_bin, d_iso, d_exp]``
    with rewards ``y`` (e.g. a recorded lap log); ``predict`` maps context rows
    ``[motion_bin, light_bin]`` to ``[d_iso, d_exp]`` offsets.
    """

    def __init__(self, eps0=1.0, eps_tau=20.0, min_visits=10, stability_window=5,
                 history_len=10, alpha=0.9, v_ref=100.0, random_state=None):
        self.eps0 = eps0
        self.eps_tau = eps_tau
        self.min_visits = min_visits
        self.stability_window = stability_window
        self.history_len = history_len
        self.alpha = alpha
        self.v_ref = v_ref
        self.random_state = random_state

    def _init_state(self):
        if self.stability_window > self.history_len:
            raise ValueError("stability_window cannot exceed history_len")
        self.table_ = BanditTable(self.eps0, self.eps_tau, self.history_len)
        self.reward_params_ = RewardParams(self.alpha, self.v_ref)
        self.policy_ = ConsolidatedPolicy()
        self.rng_ = np.random.default_rng(self.random_state)

    def fit(self, X, y):
        self._init_state()
        return self.partial_fit(X, y)

    def partial_fit(self, X, y):
        if not hasattr(self, "table_"):
            self._init_state()
        X = check_int_matrix(X, 4)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} rows but y has {len(y)}")
        for (mb, lb, di, de), r in zip(X, y):
            self.table_.update(SensingContext(mb, lb), CalibAction(di, de), r)
        return self

    def select(self, context: SensingContext) -> CalibAction:
        check_is_fitted(self, "table_")
        return self.table_.select(context, self.rng_)

    def update(self, context: SensingContext, action: CalibAction, reward: float) -> float:
        check_is_fitted(self, "table_")
        return self.table_.update(context, action, reward)

    def consolidate(self) -> ConsolidatedPolicy:
        check_is_fitted(self, "table_")
        self.policy_ = consolidate(self.table_, self.min_visits, self.stability_window)
        return self.policy_

    def predict(self, X):
        check_is_fitted(self, "table_")
        X = check_int_matrix(X, 2)
        out = np.empty((len(X), 2), dtype=np.int64)
        for i, (mb, lb) in enumerate(X):
            c = SensingContext(mb, lb)
            a = self.policy_.lookup(c) or self.table_.greedy(c)
            out[i] = (a.d_iso, a.d_exp)
        return out
