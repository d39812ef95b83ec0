from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atisim import percept
from atisim.envelope import SensorSetting
from atisim.percept import (
    BACKGROUND, EscalationRequest, EscalationResponse, LocalOracleParams, Prediction, RemoteOracleParams,
    is_stale, l3_infer, l4_infer, latency_ratio, quality_score, tent,
)
from atisim.sensecam import Frame

NOISELESS = LocalOracleParams(conf_noise_sd=0.0)


def frame(mean=0.5, visible=True, difficulty=0.0, object_id="teddy", t=0.0):
    px = np.full((64, 64), mean)
    px[:, ::2] += 0.01  # zero-mean texture
    px[:, 1::2] -= 0.01
    px = np.clip(px, 0, 1)
    return Frame(px, t, SensorSetting(4, 1), 1 / 60, 100.0, object_id, visible, difficulty)


def test_tent():
    assert tent(0.5, 0.5, 0.5) == 1.0
    assert tent(1.0, 0.5, 0.5) == 0.0
    assert tent(0.25, 0.5, 0.5) == 0.5


def test_sharp_well_exposed_is_confident_and_correct():
    p = l3_infer(frame(0.5), NOISELESS, np.random.default_rng(0), lapvar=1e9)
    assert p.confidence == pytest.approx(1.0, abs=1e-6) and p.label == "teddy"


def test_invisible_gives_background():
    p = l3_infer(frame(visible=False), LocalOracleParams(), np.random.default_rng(0), lapvar=1e9)
    assert p.label == BACKGROUND and p.confidence < 0.3


def test_saturated_gives_zero_quality():
    f = Frame(np.ones((64, 64)), 0.0, SensorSetting(6, 6), 1 / 15, 3200.0, "teddy", True)
    assert quality_score(f, NOISELESS, lapvar=1e9) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0.05, 0.95))
def test_confidence_monotone_in_sharpness(a, b, mean):
    lo, hi = sorted((a, b))
    f = frame(mean)
    c_lo = l3_infer(f, NOISELESS, np.random.default_rng(1), lapvar=lo).confidence
    c_hi = l3_infer(f, NOISELESS, np.random.default_rng(1), lapvar=hi).confidence
    assert c_lo <= c_hi + 1e-12


def test_confidence_unimodal_in_brightness():
    means = np.linspace(0.0, 0.99, 34)
    conf = [quality_score(frame(m), NOISELESS, lapvar=500) for m in means]
    peak = int(np.argmax(conf))
    assert all(a <= b + 1e-12 for a, b in zip(conf[:peak], conf[1:peak + 1]))
    assert all(a >= b - 1e-12 for a, b in zip(conf[peak:], conf[peak + 1:]))
    assert abs(means[peak] - 0.5) < 0.05


def test_label_accuracy_tracks_quality():
    f = frame(0.5)
    q = quality_score(f, NOISELESS, lapvar=150.0)
    hits = np.mean([l3_infer(f, NOISELESS, np.random.default_rng(k), lapvar=150.0).label == "teddy"
                    for k in range(4000)])
    assert hits == pytest.approx(q, abs=0.03)


def test_remote_boost():
    f = frame(0.5)
    q = quality_score(f, NOISELESS, lapvar=None)
    resp = l4_infer(EscalationRequest(f, 3000, 0.0), RemoteOracleParams(), 0.0, np.random.default_rng(0),
                    local=NOISELESS)
    assert resp.prediction.confidence == pytest.approx(min(1.0, q + 0.25))
    assert resp.arrival_time == pytest.approx(2220.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0, 0.7))
def test_remote_dominance(mean, diff):
    f = frame(mean, difficulty=diff)
    q = quality_score(f, NOISELESS)
    if 0 < q < 0.75:
        r = l4_infer(EscalationRequest(f, 3000, 0.0), RemoteOracleParams(), 0.0, np.random.default_rng(0),
                     local=NOISELESS)
        assert r.prediction.confidence - q == pytest.approx(0.25)


def test_remote_invisible_zero():
    r = l4_infer(EscalationRequest(frame(visible=False), 3000, 0.0), RemoteOracleParams(), 0.0,
                 np.random.default_rng(0))
    assert r.prediction.confidence == 0.0


def test_misalignment():
    p = RemoteOracleParams(misalign_prob=1.0)
    f = frame(0.5, object_id="ping_pong_ball")
    r = l4_infer(EscalationRequest(f, 3000, 0.0), p, 0.0, np.random.default_rng(0))
    assert r.prediction.label == "golf_ball" != f.object_id
    p2 = RemoteOracleParams(confusable_pairs=(("racket", "tennis_racket_cover", 0.0),))
    r2 = l4_infer(EscalationRequest(frame(0.5, object_id="racket"), 3000, 0.0), p2, 0.0,
                  np.random.default_rng(0), local=NOISELESS)
    assert r2.prediction.label != "tennis_racket_cover"
    with pytest.raises(ValueError):
        RemoteOracleParams(confusable_pairs=(("teddy", "teddy"),))


def test_staleness_boundary():
    pred = Prediction("teddy", 0.9, "remote", 0.0)
    assert not is_stale(EscalationResponse(pred, 0.0, 2900.0), 3000.0)
    assert is_stale(EscalationResponse(pred, 0.0, 3001.0), 3000.0)
    assert not is_stale(EscalationResponse(pred, 0.0, 3000.0), 3000.0)


def test_latency_ratio():
    assert latency_ratio() == pytest.approx(2220 / 32)
    assert round(latency_ratio()) == 69


def test_percept_has_no_sensor_path():
    # the remote path is advisory only: nothing here can reach sensor control
    names = set(vars(percept))
    assert not {"SensorControl", "apply_action", "calibrate", "clamp_to_envelope"} & names


def test_validation():
    with pytest.raises(ValueError):
        Prediction("x", 1.2, "local", 0.0)
    with pytest.raises(ValueError):
        Prediction("x", 0.5, "cloud", 0.0)
    with pytest.raises(ValueError):
        LocalOracleParams(classes=("a",))
    with pytest.raises(ValueError):
        EscalationResponse(Prediction("x", 0.5, "remote", 0.0), 10.0, 5.0)
