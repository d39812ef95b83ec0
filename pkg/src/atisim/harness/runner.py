"""Closed-loop simulation of one experiment under a virtual clock."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..calibrator import (
    BanditTable, CalibAction, ConsolidatedPolicy, SensingContext, apply_action, calibrate,
    compute_reward, consolidate, discretize_context,
)
from ..errors import ConfigError
from ..envelope import (
    EXP_DEF, LightSample, MotionSample, SensorSetting, baseline_setting, safety_envelope,
)
from ..percept import EscalationRequest, l3_infer, l4_infer
from ..router import LapSummary, lap_precheck, lap_update
from ..sensecam import capture_frame, make_scene, next_env, quality_vector
from .autoexposure import autoexposure_step
from .clock import EventQueue
from .config import ExperimentConfig
from .logs import FRAME_COLUMNS, LAP_COLUMNS, csv_text, fmt, round6, write_csv
from .metrics import RunMetrics, metrics_from_rows, route_row

logger = logging.getLogger(__name__)

# independent random streams, keyed as [seed, stream, index]
STREAM_CAMERA, STREAM_LOCAL, STREAM_REMOTE, STREAM_BANDIT = 1, 2, 3, 4


@dataclass
class RunResult:
    cfg: ExperimentConfig
    metrics: RunMetrics
    frame_rows: list
    lap_rows: list
    table: Optional[BanditTable] = None
    policy: Optional[ConsolidatedPolicy] = None
    paths: dict = field(default_factory=dict)

    @property
    def rewards(self) -> list[float]:
        return [r["reward"] for r in self.lap_rows if r["reward"] is not None]

    def frame_csv(self) -> str:
        return csv_text(FRAME_COLUMNS, self.frame_rows)

    def lap_csv(self) -> str:
        return csv_text(LAP_COLUMNS, self.lap_rows)


def _scene_for(cfg: ExperimentConfig, object_id: str):
    o = cfg.objects
    return make_scene(object_id, difficulty=float(o.difficulty.get(object_id, 0.0)),
                      seed=zlib.crc32(object_id.encode()), object_mean=o.object_mean,
                      texture_sd=o.texture_sd, background=o.background)


def _mean_samples(samples: list) -> tuple[LightSample, MotionSample]:
    lux = float(np.mean([l.lux for l, _ in samples]))
    acc = float(np.mean([m.acc_mag for _, m in samples]))
    gyro = float(np.mean([m.gyro_mag for _, m in samples]))
    return LightSample(lux), MotionSample(acc, gyro)


class _Run:
    """Mutable state of one simulation; driven by the event loop in :func:`run_experiment`."""

    def __init__(self, cfg: ExperimentConfig, table: Optional[BanditTable], policy: Optional[ConsolidatedPolicy]):
        self.cfg = cfg
        self.g = cfg.grids
        self.traj = cfg.scenario
        self.fpl = self.traj.frames_per_lap
        self.scenes = {c: _scene_for(cfg, c) for c in cfg.objects.classes}
        self.table = table
        self.policy = policy
        self.bandit_rng = np.random.default_rng([cfg.seed, STREAM_BANDIT])
        self.setting = SensorSetting(self.g.nearest_exposure_index(EXP_DEF), self.g.nearest_iso_index(100.0))
        self.last_mean: Optional[float] = None
        self.prev_lap_samples: list = []
        self.lap_samples: list = []
        self.frame_rows: list = []
        self.lap_rows: dict = {}
        self.missing_contexts: set = set()
        self._start_lap(0)

    # -- lap bookkeeping -------------------------------------------------
    def _start_lap(self, lap: int) -> None:
        self.lap = lap
        self.object_id = self.cfg.objects.class_for_lap(lap)
        self.summary = LapSummary(lap_index=lap, lap_end_time=(lap + 1) * self.traj.lap_ms)
        self.peak_ctx: Optional[SensingContext] = None
        self.peak_action: Optional[CalibAction] = None
        self.lap_action: Optional[CalibAction] = None
        self.lap_eps: Optional[float] = None
        t0 = lap * self.traj.lap_ms
        # context and baseline use the previous lap's average conditions
        samples = self.prev_lap_samples or [next_env(self.traj, t0)[:2]]
        self.lap_light, self.lap_motion = _mean_samples(samples)
        self.lap_ctx = discretize_context(self.lap_motion, self.lap_light, self.cfg.bins)
        if self.cfg.sensing_mode == "L1_L2_learning":
            self.lap_baseline = baseline_setting(self.lap_motion, self.lap_light, self.cfg.envelope, self.g)
            env = safety_envelope(self.lap_motion, self.lap_light, self.cfg.envelope, self.g)
            res = calibrate("learning", self.lap_baseline, self.lap_ctx, self.table, None, env, self.g,
                            self.bandit_rng)
            self.lap_action, self.lap_eps = res.action, res.epsilon

    def _choose_setting(self, l: LightSample, m: MotionSample):
        """Sensor setting for the next frame, plus the (context, action) that produced it."""
        mode, p, g = self.cfg.sensing_mode, self.cfg.envelope, self.g
        if mode == "AE":
            if self.last_mean is not None:
                self.setting = autoexposure_step(self.setting, self.last_mean, g)
            return self.setting, self.lap_ctx, None
        env = safety_envelope(m, l, p, g)
        if mode == "L1":
            return baseline_setting(m, l, p, g), self.lap_ctx, None
        if mode == "L1_L2_learning":
            return apply_action(self.lap_baseline, self.lap_action, env, g), self.lap_ctx, self.lap_action
        # inference reacts to the current frame's conditions, no lap-boundary wait
        ctx = discretize_context(m, l, self.cfg.bins)
        if ctx not in self.policy and ctx not in self.missing_contexts:
            self.missing_contexts.add(ctx)
            logger.warning("policy has no entry for context %s; falling back to the greedy table action", ctx)
        res = calibrate("inference", baseline_setting(m, l, p, g), ctx, self.table, self.policy, env, g, None)
        return res.setting, ctx, res.action

    # -- per-frame -------------------------------------------------------
    def frame(self, k: int, t: float) -> None:
        cfg = self.cfg
        l, m, visible = next_env(self.traj, t)
        self.lap_samples.append((l, m))
        setting, ctx, action = self._choose_setting(l, m)
        cam_rng = np.random.default_rng([cfg.seed, STREAM_CAMERA, k])
        f = capture_frame(self.scenes[self.object_id], setting, m, l, cfg.camera, self.g, cam_rng,
                          timestamp=t, visible=visible)
        qv = quality_vector(f, cfg.camera)
        pred = l3_infer(f, cfg.local, np.random.default_rng([cfg.seed, STREAM_LOCAL, k]), lapvar=qv.blur_score)
        before = self.summary.peak_pred
        self.summary = lap_update(self.summary, pred, qv.blur_score, f)
        if self.summary.peak_pred is not before:
            self.peak_ctx, self.peak_action = ctx, action
        mean = float(f.pixels.mean())
        self.last_mean = mean
        self.frame_rows.append({
            "timestamp_ms": t, "lap": self.lap, "lux": l.lux, "acc_mag": m.acc_mag, "gyro_mag": m.gyro_mag,
            "exp_idx": setting.exp_idx, "exp_s": f.exposure_s, "iso": f.iso, "mean_brightness": mean,
            "lapvar": qv.blur_score, "saturation_ratio": qv.saturation_ratio, "l3_conf": pred.confidence,
            "l3_label": pred.label, "truth_label": f.object_id, "visible": visible, "mode": cfg.sensing_mode,
        })

    # -- lap end ---------------------------------------------------------
    def end_lap(self, t: float, queue: EventQueue) -> None:
        cfg, s = self.cfg, self.summary
        reward = q_after = None
        if cfg.sensing_mode == "L1_L2_learning":
            reward = compute_reward(s, cfg.reward)
            q_after = self.table.update(self.lap_ctx, self.lap_action, round6(reward))

        ctx = self.peak_ctx or self.lap_ctx
        action = self.peak_action
        row = {
            "lap": self.lap, "motion_bin": ctx.motion_bin, "light_bin": ctx.light_bin,
            "d_iso": action.d_iso if action else None, "d_exp": action.d_exp if action else None,
            "reward": reward, "epsilon": self.lap_eps, "q_after": q_after,
            "peak_conf": round6(s.peak_conf), "peak_sharpness": round6(s.peak_sharpness),
            "truth_label": self.object_id, "local_correct": s.peak_pred.label == self.object_id,
            "inference_mode": cfg.inference_mode, "lap_start_ms": t - self.traj.lap_ms, "lap_end_ms": t,
            "l4_called": False, "l4_conf": None, "l4_correct": None, "l4_stale": None,
            "l4_arrival_ms": None, "l4_horizon_ms": None,
        }
        self.lap_rows[self.lap] = row
        if cfg.inference_mode == "L3_only":
            self._finalize(row)
        else:
            # the remote answer is computed for every lap (offline-replay style) so
            # that replay under other thresholds sees the same remote outcome
            send = t + cfg.network.rtt_ms
            req = EscalationRequest(s.peak_frame, cfg.network.rtt_ms + cfg.remote.infer_latency_ms, t)
            resp = l4_infer(req, cfg.remote, send, np.random.default_rng([cfg.seed, STREAM_REMOTE, self.lap]),
                            local=cfg.local)
            arrival = resp.arrival_time + cfg.remote_extra_delay_ms
            horizon = t + cfg.network.rtt_ms + cfg.remote.infer_latency_ms
            row.update({"l4_conf": round6(resp.prediction.confidence),
                        "l4_correct": resp.prediction.label == self.object_id,
                        "l4_stale": arrival > horizon, "l4_arrival_ms": arrival, "l4_horizon_ms": horizon})
            settled = lap_precheck(row["peak_conf"], row["peak_sharpness"], cfg.thresholds)
            if cfg.inference_mode == "L3_L4_split" and settled is not None:
                self._finalize(row)
            else:
                # decided when the answer lands or the horizon passes; capture goes on meanwhile
                queue.schedule(min(arrival, horizon), "remote", self.lap)

        self.prev_lap_samples, self.lap_samples = self.lap_samples, []
        if self.lap + 1 < cfg.laps:
            self._start_lap(self.lap + 1)

    def _finalize(self, row: dict) -> None:
        v = route_row({k: fmt(v) for k, v in row.items()}, self.cfg.thresholds)
        row.update({"decision": v.decision.verdict.value, "reason": v.decision.reason.value,
                    "l4_called": v.decision.l4_called, "correct": v.correct})

    def remote_arrival(self, lap: int) -> None:
        self._finalize(self.lap_rows[lap])


def run_experiment(cfg: ExperimentConfig, out_dir=None, table: Optional[BanditTable] = None,
                   policy: Optional[ConsolidatedPolicy] = None, tag: str = "") -> RunResult:
    """Run ``cfg`` to completion; write CSV logs under ``out_dir`` when given."""
    if cfg.sensing_mode == "L1_L2_learning" and table is None:
        b = cfg.bandit
        table = BanditTable(b.eps0, b.eps_tau, b.history_len)
    if cfg.sensing_mode == "L1_L2_inference":
        if policy is None:
            if not cfg.policy_path:
                raise ConfigError("policy_path: required for sensing_mode L1_L2_inference")
            policy = ConsolidatedPolicy.from_csv(cfg.policy_path)
        if table is None:
            table = BanditTable(cfg.bandit.eps0, cfg.bandit.eps_tau, cfg.bandit.history_len)

    run = _Run(cfg, table, policy)
    queue = EventQueue()
    period = cfg.scenario.frame_period_ms
    queue.schedule(0.0, "frame", 0)
    n_frames = cfg.laps * run.fpl
    while queue:
        ev = queue.pop()
        if ev.kind == "frame":
            k = ev.payload
            run.frame(k, ev.time)
            if (k + 1) % run.fpl == 0:
                queue.schedule((k + 1) * period, "lap_end", k // run.fpl)
            if k + 1 < n_frames:
                queue.schedule((k + 1) * period, "frame", k + 1)
        elif ev.kind == "lap_end":
            run.end_lap(ev.time, queue)
        elif ev.kind == "remote":
            run.remote_arrival(ev.payload)

    lap_rows = [run.lap_rows[i] for i in range(cfg.laps)]
    metrics = metrics_from_rows([{k: fmt(v) for k, v in r.items()} for r in lap_rows], cfg.thresholds)
    out_policy = None
    if cfg.sensing_mode == "L1_L2_learning":
        out_policy = consolidate(table, cfg.bandit.min_visits, cfg.bandit.stability_window)
    elif cfg.sensing_mode == "L1_L2_inference":
        out_policy = policy
    result = RunResult(cfg, metrics, run.frame_rows, lap_rows, table, out_policy)
    if out_dir is not None:
        out = Path(out_dir)
        prefix = f"{tag}_" if tag else ""
        result.paths["frames"] = write_csv(out / f"{prefix}frames.csv", FRAME_COLUMNS, run.frame_rows)
        result.paths["laps"] = write_csv(out / f"{prefix}laps.csv", LAP_COLUMNS, lap_rows)
        if cfg.sensing_mode == "L1_L2_learning":
            result.paths["policy"] = out_policy.to_csv(out / f"{prefix}policy.csv")
            result.paths["table"] = table.to_csv(out / f"{prefix}table.csv")
    return result
