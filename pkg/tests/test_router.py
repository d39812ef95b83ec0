from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atisim.envelope import SensorSetting
from atisim.errors import DataError, EmptyLapError
from atisim.percept import EscalationResponse, Prediction
from atisim.router import (
    LapRouter, LapSummary, NetworkState, Reason, RecordedLap, RoutingDecision, RoutingThresholds, TaskMeta,
    Verdict, ablate_tau, frame_route, lap_coordinate, lap_update, route_recorded,
)
from atisim.sensecam import Frame, QualityVector

TH = RoutingThresholds()
FRAME = Frame(np.full((64, 64), 0.5), 0.0, SensorSetting(4, 1), 1 / 60, 100.0, "teddy", True)


def summary(conf, sharp, end=3000.0):
    pred = Prediction("teddy", conf, "local", 100.0)
    return lap_update(LapSummary(lap_index=0, lap_end_time=end), pred, sharp, FRAME)


def remote(conf, arrival=5220.0, label="teddy"):
    def fn(req, now):
        return EscalationResponse(Prediction(label, conf, "remote", req.payload.timestamp), now, arrival)
    return fn


def test_lap_update_rules():
    s = summary(0.5, 30)
    assert s.n_frames == 1 and s.peak_conf == 0.5
    tie = lap_update(s, Prediction("racket", 0.5, "local", 200.0), 99.0)
    assert tie.peak_pred.label == "teddy" and tie.n_frames == 2
    lower = lap_update(s, Prediction("racket", 0.2, "local", 200.0), 99.0)
    assert lower.peak_sharpness == 30
    with pytest.raises(ValueError):
        lap_update(s, Prediction("teddy", 0.9, "remote", 0.0), 1.0)


def test_worked_decisions():
    assert lap_coordinate(summary(0.6, 30), TH).decision == RoutingDecision(Verdict.ACCEPT_LOCAL,
                                                                              Reason.CONFIDENT_LOCAL)
    assert lap_coordinate(summary(0.4, 10), TH).decision.reason is Reason.BLUR_FILTERED
    out = lap_coordinate(summary(0.4, 30), TH, remote(0.7), horizon=5220.0)
    assert out.decision == RoutingDecision(Verdict.ACCEPT_REMOTE, Reason.REMOTE_BETTER, True)
    assert out.prediction.source == "remote"
    kept = lap_coordinate(summary(0.4, 30), TH, remote(0.3), horizon=5220.0)
    assert kept.decision.reason is Reason.REMOTE_WORSE_KEPT_LOCAL and kept.prediction.source == "local"


def test_stale_remote_is_discarded():
    out = lap_coordinate(summary(0.4, 30), TH, remote(0.99, arrival=6000.0), horizon=5220.0)
    assert out.decision.reason is Reason.STALE_DISCARDED
    assert out.prediction.source == "local"


def test_empty_lap_raises():
    with pytest.raises(EmptyLapError):
        lap_coordinate(LapSummary(), TH)


def test_illegal_pair_rejected():
    with pytest.raises(ValueError):
        RoutingDecision(Verdict.RESAMPLE, Reason.REMOTE_BETTER)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 500), st.floats(0, 1), st.floats(0, 10000))
def test_lap_policy_totality_and_safety(conf, sharp, rconf, arrival):
    called = []

    def fn(req, now):
        called.append(1)
        return remote(rconf, arrival)(req, now)

    out = lap_coordinate(summary(conf, sharp, end=0.0), TH, fn, horizon=5220.0)
    d = out.decision
    if sharp < TH.tau_valid:
        assert not called and not d.l4_called
    if conf > TH.tau_conf:
        assert d.reason is Reason.CONFIDENT_LOCAL
    if d.verdict is Verdict.ACCEPT_REMOTE:
        assert out.response.arrival_time <= 5220.0 and rconf > conf


def test_frame_route_gates():
    qv = QualityVector(100.0, 0.0, 100.0)
    task = TaskMeta(deadline_ms=10000)
    th = RoutingThresholds(tau_task=0.3)
    assert frame_route(0.1, qv, NetworkState(), task, 0.0, 2220, th).reason is Reason.CONFIDENT_LOCAL
    assert frame_route(0.9, QualityVector(100, 0.9, 1), NetworkState(), task, 0.0, 2220, th).verdict \
        is Verdict.RESAMPLE
    near = TaskMeta(deadline_ms=1000)
    assert frame_route(0.9, qv, NetworkState(500), near, 0.0, 2220, th).reason is Reason.DEADLINE_INFEASIBLE
    assert frame_route(0.9, qv, NetworkState(), task, 0.0, 2220, th).verdict is Verdict.ESCALATE
    costly = TaskMeta(deadline_ms=10000, comm_cost_per_call=5.0)
    assert frame_route(0.9, qv, NetworkState(), costly, 0.0, 2220, th).reason is Reason.NEGATIVE_BENEFIT


def test_route_recorded_modes():
    lap = RecordedLap(0.4, 30, local_correct=False, remote_conf=0.7, remote_correct=True)
    assert route_recorded(lap, TH, "L3_only") == (RoutingDecision(Verdict.ACCEPT_LOCAL, Reason.CONFIDENT_LOCAL),
                                                  False)
    d, ok = route_recorded(lap, TH, "L4_only")
    assert d.reason is Reason.REMOTE_ONLY and ok
    d, ok = route_recorded(lap, TH)
    assert d.reason is Reason.REMOTE_BETTER and ok
    with pytest.raises(DataError):
        route_recorded(RecordedLap(0.4, 30, True), TH)


laps_st = st.lists(st.builds(RecordedLap, st.floats(0, 1), st.floats(0, 100), st.booleans(),
                             st.floats(0, 1), st.booleans(), st.booleans()), min_size=1, max_size=60)


@settings(max_examples=150, deadline=None)
@given(laps_st)
def test_escalation_monotone_in_tau(laps):
    taus = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0]
    rates = [r.escalation_rate for r in ablate_tau(laps, taus)]
    assert all(a <= b for a, b in zip(rates, rates[1:]))
    assert rates[-1] == sum(l.peak_sharpness >= TH.tau_valid for l in laps) / len(laps)


def test_tau_zero_escalates_only_zero_conf():
    laps = [RecordedLap(0.0, 50, False, 0.5, True), RecordedLap(0.2, 50, False, 0.5, True)]
    assert ablate_tau(laps, [0.0])[0].escalation_rate == 0.5


def test_lap_router_estimator():
    r = LapRouter().fit()
    X = np.array([[0.6, 30], [0.4, 10], [0.4, 30], [0.4, 30]])
    assert r.predict(X).tolist() == [0, 0, 1, 1]
    reasons = [d.reason for d in r.decide(X, [0.0, 0.0, 0.7, 0.3])]
    assert reasons == [Reason.CONFIDENT_LOCAL, Reason.BLUR_FILTERED, Reason.REMOTE_BETTER,
                       Reason.REMOTE_WORSE_KEPT_LOCAL]


def test_threshold_validation():
    with pytest.raises(ValueError):
        RoutingThresholds(tau_conf=1.5)
    with pytest.raises(ValueError):
        TaskMeta(deadline_ms=0)
    with pytest.raises(ValueError):
        NetworkState(rtt_ms=-1)
