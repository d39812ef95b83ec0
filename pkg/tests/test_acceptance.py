"""Acceptance criteria 1-11; a PASS/FAIL line per criterion is printed in the pytest summary."""

from __future__ import annotations

import math

import numpy as np
import pytest

from atisim.calibrator import ACTIONS, ALL_CONTEXTS, BanditTable, consolidate
from atisim.envelope import (
    EnvelopeParams, LightSample, MotionSample, SafetyEnvelope, SensorSetting, SettingGrids, baseline_setting,
    clamp_to_envelope, continuous_baseline, iso_for_exposure, safety_envelope,
)
from atisim.harness import run_experiment
from atisim.harness.experiments import run_dynamic_lighting, run_grid, run_threshold_ablation, tradeoff_scores
from atisim.harness.presets import PUBLISHED_SEED, alternating, eight_class
from atisim.harness.replay import replay
from atisim.percept import EscalationResponse, LocalOracleParams, Prediction, RemoteOracleParams, latency_ratio
from atisim.router import (
    LapSummary, NetworkState, Reason, RoutingThresholds, TaskMeta, Verdict, frame_route, lap_coordinate,
    lap_update,
)
from atisim.sensecam import QualityVector, laplacian_variance

from .test_sensecam import brute_laplacian_variance

P, G = EnvelopeParams(), SettingGrids()
crit = pytest.mark.criterion


def report(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


@crit(1, "envelope containment and clamp idempotence (10,000 fuzz cases each)")
def test_c1_envelope_fuzz():
    rng = np.random.default_rng(1)
    acc, gyro = rng.exponential(2.0, 10_000), rng.exponential(1.0, 10_000)
    lux = 10 ** rng.uniform(-1, 4, 10_000)
    inside = sum(safety_envelope(m, l, P, G).contains(baseline_setting(m, l, P, G))
                 for m, l in ((MotionSample(a, g), LightSample(x)) for a, g, x in zip(acc, gyro, lux)))
    idem = 0
    for _ in range(10_000):
        lo, hi = sorted(rng.integers(0, G.n_exp, 2))
        env = SafetyEnvelope(int(lo), int(hi), int(rng.integers(0, G.n_iso)))
        s = SensorSetting(int(rng.integers(-3, 10)), int(rng.integers(-3, 10)))
        once = clamp_to_envelope(s, env)
        idem += clamp_to_envelope(once, env) == once and env.contains(once)
    assert report(1, inside == idem == 10_000, f"contained {inside}/10000, idempotent {idem}/10000")


@crit(2, "ISO reciprocity under halved exposure (100 lux values, rel err < 1e-12)")
def test_c2_iso_reciprocity():
    rng = np.random.default_rng(2)
    worst = 0.0
    for lux in 10 ** rng.uniform(-0.5, 4, 100):
        l = LightSample(float(lux))
        exp_t, _ = continuous_baseline(MotionSample(1, 1), l, P, G)
        a, b = iso_for_exposure(l, exp_t, P, G), iso_for_exposure(l, exp_t / 2, P, G)
        worst = max(worst, abs(b / (2 * a) - 1))
    assert report(2, worst < 1e-12, f"max rel err {worst:.2e}")


@crit(3, "Laplacian variance equals brute-force oracle (50 images, rel err < 1e-9)")
def test_c3_laplacian_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        img = rng.random((64, 64))
        ref = brute_laplacian_variance(img)
        worst = max(worst, abs(laplacian_variance(img) - ref) / ref)
    const = laplacian_variance(np.full((64, 64), rng.random()))
    assert report(3, worst < 1e-9 and const == 0.0, f"max rel err {worst:.2e}, constant -> {const}")


@crit(4, "bandit greedy matches brute-force best in >= 95% of contexts; consolidation matches argmax")
def test_c4_bandit_convergence():
    rng = np.random.default_rng(4)
    true_r = rng.uniform(0.05, 0.95, size=(len(ALL_CONTEXTS), len(ACTIONS)))
    t = BanditTable()
    for c in ALL_CONTEXTS:
        for _ in range(500):
            a = t.select(c, rng)
            t.update(c, a, float(true_r[c.index, a.index]))
    best = true_r.argmax(axis=1)
    hits = sum(t.greedy(c).index == best[c.index] for c in ALL_CONTEXTS)
    pol = consolidate(t)
    sound = all(e.action == t.greedy(c) for c, e in pol.entries.items())
    frac = hits / len(ALL_CONTEXTS)
    assert report(4, frac >= 0.95 and sound and len(pol) > 0,
                  f"greedy==best in {hits}/25, {len(pol)} consolidated entries sound={sound}")


@crit(5, "L2 reward: last-50 mean exceeds first-50 by >= 0.1 with lower std (dark track, 270 laps)")
def test_c5_learning_dynamics(dark_training):
    r = np.array(dark_training.rewards)
    assert len(r) == 270
    first, last = r[:50], r[-50:]
    ok = last.mean() - first.mean() >= 0.1 and last.std() < first.std()
    assert report(5, ok, f"first {first.mean():.3f}+-{first.std():.3f}, last {last.mean():.3f}+-{last.std():.3f}")


@crit(6, "the four worked lap decisions")
def test_c6_routing_rules():
    th = RoutingThresholds()
    frame_stub = object()

    def lap(conf, sharp):
        return lap_update(LapSummary(lap_end_time=3000.0), Prediction("teddy", conf, "local", 0.0), sharp,
                          frame_stub)

    def remote(conf):
        return lambda req, now: EscalationResponse(Prediction("teddy", conf, "remote", 0.0), now, now + 2220)

    got = [
        lap_coordinate(lap(0.6, 30), th).decision,
        lap_coordinate(lap(0.4, 10), th).decision,
        lap_coordinate(lap(0.4, 30), th, remote(0.7), horizon=5220.0).decision,
        lap_coordinate(lap(0.4, 30), th, remote(0.3), horizon=5220.0).decision,
    ]
    want = [(Verdict.ACCEPT_LOCAL, Reason.CONFIDENT_LOCAL), (Verdict.ACCEPT_LOCAL, Reason.BLUR_FILTERED),
            (Verdict.ACCEPT_REMOTE, Reason.REMOTE_BETTER), (Verdict.ACCEPT_LOCAL, Reason.REMOTE_WORSE_KEPT_LOCAL)]
    ok = [(d.verdict, d.reason) for d in got] == want
    assert report(6, ok, ", ".join(f"{d.verdict.value}/{d.reason.value}" for d in got))


@crit(7, "tau_conf sweep: monotone escalation, non-monotone accuracy, interior trade-off optimum")
def test_c7_ablation(dark_training):
    cfg = eight_class(PUBLISHED_SEED).with_overrides(sensing_mode="L1_L2_inference")
    rows = run_threshold_ablation(cfg, policy=dark_training.policy)
    esc = [r.escalation_rate for r in rows]
    acc = [r.accuracy for r in rows]
    score = tradeoff_scores(rows, 0.5)
    best = int(np.argmax(score))
    diffs = np.diff(acc)
    violations = int(np.sum(np.diff(esc) < 0))
    non_monotone = bool(np.any(diffs > 0) and np.any(diffs < 0))
    ok = violations == 0 and non_monotone and 0 < best < len(rows) - 1
    table = " ".join(f"{r.tau_conf:.1f}:{r.accuracy:.3f}/{r.escalation_rate:.2f}" for r in rows)
    assert report(7, ok, f"best tau {rows[best].tau_conf}, {violations} violations; {table}")


@crit(8, "grid direction: L1-L3 > AE-L3, L1/L2-split > AE-split in accuracy and < in call rate (>= 5 pts)")
def test_c8_table3_direction(dark_training):
    cfg = eight_class(PUBLISHED_SEED)
    rows = {r.label: r.metrics for r in run_grid(cfg, ("AE", "L1", "L1_L2_inference"), ("L3_only", "L3_L4_split"),
                                                 policy=dark_training.policy)}
    a = rows["L1-L3_only"].total_accuracy - rows["AE-L3_only"].total_accuracy
    b = rows["L1_L2-L3_L4_split"].total_accuracy - rows["AE-L3_L4_split"].total_accuracy
    c = rows["AE-L3_L4_split"].l4_call_rate - rows["L1_L2-L3_L4_split"].l4_call_rate
    detail = "; ".join(f"{k} acc {m.total_accuracy:.3f} calls {m.l4_call_rate:.3f}" for k, m in rows.items())
    assert report(8, min(a, b, c) >= 0.05, f"margins {a:+.3f}/{b:+.3f}/{c:+.3f}; {detail}")


@crit(9, "alternating light: ATI settles within 1 frame, AE > 3; ATI better L3 accuracy and fewer L4 calls")
def test_c9_dynamic_lighting(two_light_training):
    res = run_dynamic_lighting(alternating(PUBLISHED_SEED), two_light_training.policy)
    ati, ae = res.settle_frames("ati"), res.settle_frames("ae")
    acc_ati, acc_ae = res.l3_accuracy("ati"), res.l3_accuracy("ae")
    call_ati, call_ae = res.ati.metrics.l4_call_rate, res.ae.metrics.l4_call_rate
    ok = max(ati) <= 1 and min(ae) > 3 and acc_ati > acc_ae and call_ati < call_ae
    assert report(9, ok, f"settle ATI max {max(ati)}, AE min {min(ae)}; L3 acc {acc_ati:.2f} vs {acc_ae:.2f}; "
                         f"calls {call_ati:.2f} vs {call_ae:.2f}")


@crit(10, "latency ratio 2220/32, infeasible deadlines never escalate, late answers always discarded")
def test_c10_latency_model():
    ratio_ok = math.isclose(latency_ratio(LocalOracleParams(), RemoteOracleParams()), 2220 / 32, rel_tol=1e-12)
    rng = np.random.default_rng(10)
    th = RoutingThresholds(tau_task=0.2)
    qv = QualityVector(200.0, 0.0, 50.0)
    infeasible = escalated = 0
    for _ in range(5000):
        now, rtt = rng.uniform(0, 1e4), rng.uniform(0, 1000)
        deadline = rng.uniform(1, 2e4)
        d = frame_route(float(rng.uniform(0, 1)), qv, NetworkState(rtt), TaskMeta(deadline), now, 2220.0, th)
        if deadline < now + rtt + 2220.0:
            infeasible += 1
            escalated += d.verdict is Verdict.ESCALATE
    cfg = eight_class(PUBLISHED_SEED, laps=60).with_overrides(sensing_mode="AE", remote_extra_delay_ms=500.0)
    late = run_experiment(cfg)
    called = [r for r in late.lap_rows if r["l4_called"]]
    discarded = sum(r["reason"] == Reason.STALE_DISCARDED.value and r["correct"] == r["local_correct"]
                    for r in called)
    ok = ratio_ok and escalated == 0 and infeasible > 0 and called and discarded == len(called)
    assert report(10, ok, f"ratio {latency_ratio():.2f}, {escalated}/{infeasible} infeasible escalated, "
                          f"{discarded}/{len(called)} late answers discarded")


@crit(11, "byte-identical CSVs for identical runs; replay reproduces metrics exactly")
def test_c11_determinism_and_replay(tmp_path, dark_training):
    cfg = eight_class(PUBLISHED_SEED, laps=40).with_overrides(sensing_mode="L1_L2_inference")
    a = run_experiment(cfg, out_dir=tmp_path / "a", policy=dark_training.policy)
    run_experiment(cfg, out_dir=tmp_path / "b", policy=dark_training.policy)
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in ("frames.csv", "laps.csv"))
    exact = replay(a.paths["laps"], cfg.thresholds) == a.metrics
    learn = cfg.with_overrides(sensing_mode="L1_L2_learning", inference_mode="L3_L4_split")
    l1 = run_experiment(learn, out_dir=tmp_path / "c")
    l2 = run_experiment(learn, out_dir=tmp_path / "d")
    same_learn = all((tmp_path / "c" / n).read_bytes() == (tmp_path / "d" / n).read_bytes()
                     for n in ("frames.csv", "laps.csv", "policy.csv", "table.csv"))
    exact_learn = replay(l1.paths["laps"], learn.thresholds) == l1.metrics == l2.metrics
    ok = same and exact and same_learn and exact_learn
    assert report(11, ok, f"identical={same and same_learn}, replay exact={exact and exact_learn}")
