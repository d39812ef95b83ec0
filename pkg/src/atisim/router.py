"""Lap-level and frame-level routing between the local and remote predictors.

Lap policy: keep the best local prediction of the lap; accept it when it is
confident, or when the frame is too blurred for the remote model to help;
otherwise escalate the peak frame and take the remote answer only if it is
strictly more confident. Ties always go to the local path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_finite_nonneg, check_positive, check_sensor_matrix, check_unit_interval
from .errors import DataError, EmptyLapError
from .percept import EscalationRequest, EscalationResponse, Prediction, is_stale
from .sensecam import Frame, QualityVector


class Verdict(str, enum.Enum):
    ACCEPT_LOCAL = "accept_local"
    ACCEPT_REMOTE = "accept_remote"
    RESAMPLE = "resample"
    NO_ESCALATION = "no_escalation"
    # frame mode only: all gates passed, a remote answer is pending
    ESCALATE = "escalate"


class Reason(str, enum.Enum):
    CONFIDENT_LOCAL = "confident_local"
    BLUR_FILTERED = "blur_filtered"
    REMOTE_BETTER = "remote_better"
    REMOTE_WORSE_KEPT_LOCAL = "remote_worse_kept_local"
    DEADLINE_INFEASIBLE = "deadline_infeasible"
    QV_BLINDED = "qv_blinded"
    NEGATIVE_BENEFIT = "negative_benefit"
    STALE_DISCARDED = "stale_discarded"
    ESCALATION_PENDING = "escalation_pending"
    REMOTE_ONLY = "remote_only"


LEGAL_PAIRS = frozenset({
    (Verdict.ACCEPT_LOCAL, Reason.CONFIDENT_LOCAL),
    (Verdict.ACCEPT_LOCAL, Reason.BLUR_FILTERED),
    (Verdict.ACCEPT_LOCAL, Reason.REMOTE_WORSE_KEPT_LOCAL),
    (Verdict.ACCEPT_LOCAL, Reason.STALE_DISCARDED),
    (Verdict.ACCEPT_REMOTE, Reason.REMOTE_BETTER),
    (Verdict.ACCEPT_REMOTE, Reason.REMOTE_ONLY),
    (Verdict.NO_ESCALATION, Reason.CONFIDENT_LOCAL),
    (Verdict.NO_ESCALATION, Reason.DEADLINE_INFEASIBLE),
    (Verdict.NO_ESCALATION, Reason.NEGATIVE_BENEFIT),
    (Verdict.RESAMPLE, Reason.QV_BLINDED),
    (Verdict.ESCALATE, Reason.ESCALATION_PENDING),
})


@dataclass(frozen=True)
class RoutingDecision:
    verdict: Verdict
    reason: Reason
    l4_called: bool = False

    def __post_init__(self):
        object.__setattr__(self, "verdict", Verdict(self.verdict))
        object.__setattr__(self, "reason", Reason(self.reason))
        if (self.verdict, self.reason) not in LEGAL_PAIRS:
            raise ValueError(f"illegal routing decision {self.verdict.value}/{self.reason.value}")


@dataclass(frozen=True)
class RoutingThresholds:
    tau_conf: float = 0.5
    tau_valid: float = 20.0
    tau_task: float = 0.5
    qv_min_sharp: float = 5.0
    qv_max_sat: float = 0.5

    def __post_init__(self):
        check_unit_interval(self.tau_conf, "tau_conf")
        check_finite_nonneg(self.tau_valid, "tau_valid")
        check_unit_interval(self.tau_task, "tau_task")
        check_finite_nonneg(self.qv_min_sharp, "qv_min_sharp")
        check_unit_interval(self.qv_max_sat, "qv_max_sat")


@dataclass(frozen=True)
class NetworkState:
    rtt_ms: float = 0.0
    energy_headroom: float = 1.0

    def __post_init__(self):
        check_finite_nonneg(self.rtt_ms, "rtt_ms")


@dataclass(frozen=True)
class TaskMeta:
    deadline_ms: float
    error_cost: float = 1.0
    comm_cost_per_call: float = 0.1

    def __post_init__(self):
        check_positive(self.deadline_ms, "deadline_ms")
        check_finite_nonneg(self.error_cost, "error_cost")
        check_finite_nonneg(self.comm_cost_per_call, "comm_cost_per_call")


@dataclass(frozen=True)
class LapSummary:
    lap_index: int = 0
    lap_end_time: float = 0.0
    n_frames: int = 0
    peak_conf: float = 0.0
    peak_pred: Optional[Prediction] = None
    peak_sharpness: float = 0.0
    peak_frame: Optional[Frame] = None

    @property
    def empty(self) -> bool:
        return self.peak_pred is None


def lap_update(s: LapSummary, pred: Prediction, sharpness: float,
               frame: Optional[Frame] = None) -> LapSummary:
    if pred.source != "local":
        raise ValueError("lap peaks track local predictions only")
    s = replace(s, n_frames=s.n_frames + 1)
    if s.peak_pred is None or pred.confidence > s.peak_conf:
        s = replace(s, peak_conf=pred.confidence, peak_pred=pred,
                    peak_sharpness=float(sharpness), peak_frame=frame)
    return s


def lap_precheck(peak_conf: float, peak_sharpness: float, th: RoutingThresholds) -> Optional[RoutingDecision]:
    """Decision reachable without the remote model, or None when the lap escalates."""
    if peak_conf > th.tau_conf:
        return RoutingDecision(Verdict.ACCEPT_LOCAL, Reason.CONFIDENT_LOCAL)
    if peak_sharpness < th.tau_valid:
        return RoutingDecision(Verdict.ACCEPT_LOCAL, Reason.BLUR_FILTERED)
    return None


def resolve_remote(peak_conf: float, remote_conf: float, stale: bool) -> RoutingDecision:
    if stale:
        return RoutingDecision(Verdict.ACCEPT_LOCAL, Reason.STALE_DISCARDED, l4_called=True)
    if remote_conf > peak_conf:
        return RoutingDecision(Verdict.ACCEPT_REMOTE, Reason.REMOTE_BETTER, l4_called=True)
    return RoutingDecision(Verdict.ACCEPT_LOCAL, Reason.REMOTE_WORSE_KEPT_LOCAL, l4_called=True)


@dataclass(frozen=True)
class LapOutcome:
    prediction: Prediction
    decision: RoutingDecision
    response: Optional[EscalationResponse] = None


RemoteFn = Callable[[EscalationRequest, float], EscalationResponse]


def lap_coordinate(s: LapSummary, th: RoutingThresholds, l4: Optional[RemoteFn] = None,
                   now: Optional[float] = None, horizon: float = math.inf,
                   budget_ms: float = math.inf) -> LapOutcome:
    """Apply the lap policy to a finished lap.

    ``l4(request, now)`` returns the remote response; it is only invoked when
    the policy escalates. Responses arriving after ``horizon`` are discarded.
    """
    if s.empty:
        raise EmptyLapError(f"lap {s.lap_index} has no frames; no decision possible")
    d = lap_precheck(s.peak_conf, s.peak_sharpness, th)
    if d is not None:
        return LapOutcome(s.peak_pred, d)
    if l4 is None or s.peak_frame is None:
        raise ValueError("lap requires escalation but no remote path or payload is available")
    now = s.lap_end_time if now is None else now
    budget = budget_ms
    if not math.isfinite(budget):
        budget = horizon - now if math.isfinite(horizon) and horizon > now else 1e9
    resp = l4(EscalationRequest(s.peak_frame, budget, now), now)
    d = resolve_remote(s.peak_conf, resp.prediction.confidence, is_stale(resp, horizon))
    final = resp.prediction if d.verdict is Verdict.ACCEPT_REMOTE else s.peak_pred
    return LapOutcome(final, d, resp)


def linear_benefit(u: float, task: TaskMeta, th: RoutingThresholds) -> float:
    return (u - th.tau_task) * task.error_cost


def frame_route(u: float, qv: QualityVector, net: NetworkState, task: TaskMeta, now: float,
                l4_latency_ms: float, th: RoutingThresholds = RoutingThresholds(),
                benefit_model: Callable = linear_benefit) -> RoutingDecision:
    u = check_unit_interval(u, "u")
    if u <= th.tau_task:
        return RoutingDecision(Verdict.NO_ESCALATION, Reason.CONFIDENT_LOCAL)
    if qv.blur_score < th.qv_min_sharp or qv.saturation_ratio > th.qv_max_sat:
        return RoutingDecision(Verdict.RESAMPLE, Reason.QV_BLINDED)
    if now + net.rtt_ms + l4_latency_ms > task.deadline_ms:
        return RoutingDecision(Verdict.NO_ESCALATION, Reason.DEADLINE_INFEASIBLE)
    if benefit_model(u, task, th) <= task.comm_cost_per_call:
        return RoutingDecision(Verdict.NO_ESCALATION, Reason.NEGATIVE_BENEFIT)
    return RoutingDecision(Verdict.ESCALATE, Reason.ESCALATION_PENDING, l4_called=True)


@dataclass(frozen=True)
class RecordedLap:
    """What replay needs from one logged lap.

    ``remote_conf`` is None when no remote answer was recorded (local-only
    runs); such laps are never escalated on replay.
    """

    peak_conf: float
    peak_sharpness: float
    local_correct: bool
    remote_conf: Optional[float] = None
    remote_correct: bool = False
    remote_stale: bool = False


def route_recorded(lap: RecordedLap, th: RoutingThresholds,
                   inference_mode: str = "L3_L4_split") -> tuple[RoutingDecision, bool]:
    """Re-route a recorded lap; returns the decision and whether the final answer is correct."""
    if inference_mode == "L3_only":
        d = lap_precheck(lap.peak_conf, lap.peak_sharpness, th)
        # without a remote path an unconfident lap still keeps the local answer
        return d or RoutingDecision(Verdict.ACCEPT_LOCAL, Reason.CONFIDENT_LOCAL), lap.local_correct
    if inference_mode not in ("L4_only", "L3_L4_split"):
        raise ValueError(f"unknown inference mode {inference_mode!r}")
    if lap.remote_conf is None:
        d = None if inference_mode == "L4_only" else lap_precheck(lap.peak_conf, lap.peak_sharpness, th)
        if d is None:
            raise DataError("lap needs a remote answer but none was recorded")
        return d, lap.local_correct
    if inference_mode == "L4_only":
        d = RoutingDecision(Verdict.ACCEPT_REMOTE, Reason.REMOTE_ONLY, l4_called=True)
        return d, lap.remote_correct
    d = lap_precheck(lap.peak_conf, lap.peak_sharpness, th)
    if d is None:
        d = resolve_remote(lap.peak_conf, lap.remote_conf, lap.remote_stale)
    correct = lap.remote_correct if d.verdict is Verdict.ACCEPT_REMOTE else lap.local_correct
    return d, correct


@dataclass(frozen=True)
class AblationRow:
    tau_conf: float
    accuracy: float
    escalation_rate: float


def ablate_tau(laps: Sequence[RecordedLap], tau_values: Iterable[float],
               th: RoutingThresholds = RoutingThresholds()) -> list[AblationRow]:
    laps = list(laps)
    rows = []
    for tau in tau_values:
        t = replace(th, tau_conf=float(tau))
        n_correct = n_called = 0
        for lap in laps:
            d, ok = route_recorded(lap, t)
            n_correct += ok
            n_called += d.l4_called
        n = max(len(laps), 1)
        rows.append(AblationRow(float(tau), n_correct / n if laps else 0.0, n_called / n if laps else 0.0))
    return rows


class LapRouter(BaseEstimator):
    """Lap policy as an estimator over ``[peak_conf, peak_sharpness]`` rows.

    ``predict`` returns 1 for laps that escalate and 0 for laps settled
    locally; ``decide`` returns the full decisions given remote confidences.
    """

    def __init__(self, tau_conf=0.5, tau_valid=20.0):
        self.tau_conf = tau_conf
        self.tau_valid = tau_valid

    def fit(self, X=None, y=None):
        self.thresholds_ = RoutingThresholds(tau_conf=self.tau_conf, tau_valid=self.tau_valid)
        return self

    def predict(self, X) -> np.ndarray:
        th = getattr(self, "thresholds_", None) or self.fit().thresholds_
        X = check_sensor_matrix(X, 2)
        return np.array([lap_precheck(c, s, th) is None for c, s in X], dtype=np.int64)

    def decide(self, X, remote_conf) -> list[RoutingDecision]:
        th = getattr(self, "thresholds_", None) or self.fit().thresholds_
        X = check_sensor_matrix(X, 2)
        out = []
        for (c, s), r in zip(X, np.asarray(remote_conf, dtype=np.float64)):
            d = lap_precheck(c, s, th)
            out.append(d if d is not None else resolve_remote(c, r, False))
        return out
