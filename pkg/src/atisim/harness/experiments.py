"""Experiment drivers: training, the sensing x inference grid, the threshold
sweep and the alternating-light comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from ..calibrator import BanditTable, ConsolidatedPolicy, consolidate
from ..errors import ConfigError, DataError
from ..router import AblationRow, ablate_tau
from .config import ExperimentConfig
from .logs import fmt, write_csv
from .metrics import RunMetrics, recorded_lap
from .runner import RunResult, run_experiment

logger = logging.getLogger(__name__)

DEFAULT_TAUS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class TrainResult:
    table: BanditTable
    policy: ConsolidatedPolicy
    runs: tuple

    @property
    def rewards(self) -> list[float]:
        return [r for run in self.runs for r in run.rewards]


def train(cfg: ExperimentConfig, light_levels: Optional[Sequence[float]] = None,
          out_dir=None) -> TrainResult:
    """Learn with the bandit, one stationary run per light level, sharing one table.

    Without ``light_levels`` a single run on ``cfg.scenario`` is made.
    """
    cfg = cfg.with_overrides(sensing_mode="L1_L2_learning", inference_mode="L3_only")
    b = cfg.bandit
    table = BanditTable(b.eps0, b.eps_tau, b.history_len)
    runs = []
    variants = [cfg] if not light_levels else [
        cfg.with_overrides(**{"scenario.scenario": "lap_track", "scenario.lux": float(lux),
                              "seed": cfg.seed + i})
        for i, lux in enumerate(light_levels)
    ]
    for i, c in enumerate(variants):
        tag = f"train{i}" if len(variants) > 1 else "train"
        runs.append(run_experiment(c, out_dir=out_dir, table=table, tag=tag))
    policy = consolidate(table, b.min_visits, b.stability_window)
    if out_dir is not None:
        policy.to_csv(Path(out_dir) / "policy.csv")
        table.to_csv(Path(out_dir) / "table.csv")
    return TrainResult(table, policy, tuple(runs))


@dataclass(frozen=True)
class GridRow:
    sensing_mode: str
    inference_mode: str
    metrics: RunMetrics

    @property
    def label(self) -> str:
        short = {"L1_L2_inference": "L1_L2", "L1_L2_learning": "L1_L2_learn"}.get(self.sensing_mode, self.sensing_mode)
        return f"{short}-{self.inference_mode}"


GRID_COLUMNS = ("sensing_mode", "inference_mode", "laps", "accuracy", "l4_call_rate", "mean_confidence", "ttfd_ms")


def run_grid(cfg: ExperimentConfig, sensing_modes: Sequence[str] = ("AE", "L1", "L1_L2_inference"),
             inference_modes: Sequence[str] = ("L3_only", "L4_only", "L3_L4_split"),
             policy: Optional[ConsolidatedPolicy] = None, out_dir=None) -> list[GridRow]:
    """Run every (sensing, inference) pair on the same scenario and seed."""
    if "L1_L2_inference" in sensing_modes and policy is None:
        if not cfg.policy_path:
            raise ConfigError("policy_path: the L1_L2_inference rows need a consolidated policy")
        if not Path(cfg.policy_path).exists():
            raise DataError(f"{cfg.policy_path}: policy file not found")
        policy = ConsolidatedPolicy.from_csv(cfg.policy_path)
    rows = []
    for s in sensing_modes:
        for i in inference_modes:
            c = cfg.with_overrides(sensing_mode=s, inference_mode=i)
            res = run_experiment(c, out_dir=out_dir, policy=policy if s == "L1_L2_inference" else None,
                                 tag=f"{s}-{i}")
            rows.append(GridRow(s, i, res.metrics))
    if out_dir is not None:
        write_csv(Path(out_dir) / "grid.csv", GRID_COLUMNS,
                  [{"sensing_mode": r.sensing_mode, "inference_mode": r.inference_mode, **r.metrics.as_row()}
                   for r in rows])
    return rows


def run_threshold_ablation(cfg: ExperimentConfig, taus: Sequence[float] = DEFAULT_TAUS,
                           policy: Optional[ConsolidatedPolicy] = None, out_dir=None) -> list[AblationRow]:
    """Simulate once with the split path, then re-route the recorded laps for each tau."""
    cfg = cfg.with_overrides(inference_mode="L3_L4_split")
    res = run_experiment(cfg, out_dir=out_dir, policy=policy, tag="ablation")
    laps = [recorded_lap({k: fmt(v) for k, v in r.items()}) for r in res.lap_rows]
    rows = ablate_tau(laps, taus, cfg.thresholds)
    if out_dir is not None:
        write_csv(Path(out_dir) / "ablation.csv", ("tau_conf", "accuracy", "escalation_rate"),
                  [{"tau_conf": r.tau_conf, "accuracy": r.accuracy, "escalation_rate": r.escalation_rate}
                   for r in rows])
    return rows


def tradeoff_scores(rows: Sequence[AblationRow], lam: float = 0.5) -> list[float]:
    return [r.accuracy - lam * r.escalation_rate for r in rows]


@dataclass(frozen=True)
class DynamicResult:
    ae: RunResult
    ati: RunResult

    def settle_frames(self, which: str) -> list[int]:
        return settle_frames((self.ae if which == "ae" else self.ati).frame_rows)

    def l3_accuracy(self, which: str) -> float:
        """Fraction of laps whose local peak prediction was correct, regardless of routing."""
        rows = (self.ae if which == "ae" else self.ati).lap_rows
        return sum(bool(r["local_correct"]) for r in rows) / len(rows)


def run_dynamic_lighting(cfg: ExperimentConfig, policy: ConsolidatedPolicy, out_dir=None) -> DynamicResult:
    """AE against the consolidated policy on the same alternating-light trajectory."""
    if cfg.scenario.scenario != "alternating_light":
        cfg = cfg.with_overrides(**{"scenario.scenario": "alternating_light"})
    ae = run_experiment(cfg.with_overrides(sensing_mode="AE"), out_dir=out_dir, tag="dynamic_AE")
    ati = run_experiment(cfg.with_overrides(sensing_mode="L1_L2_inference"), out_dir=out_dir,
                         policy=policy, tag="dynamic_ATI")
    return DynamicResult(ae, ati)


def settle_frames(frame_rows: Sequence[dict]) -> list[int]:
    """Frames after each lux change until the (exposure, ISO) setting stops changing.

    Zero means the frame captured right at the transition already used the
    final setting.
    """
    out = []
    rows = list(frame_rows)
    for i in range(1, len(rows)):
        if rows[i]["lux"] == rows[i - 1]["lux"]:
            continue
        j = i
        while j + 1 < len(rows) and rows[j + 1]["lux"] == rows[i]["lux"]:
            j += 1
        key = lambda r: (r["exp_idx"], r["iso"])
        final = key(rows[j])
        k = i
        while k <= j and key(rows[k]) != final:
            k += 1
        # if it never settles, count the whole segment
        end = k if k <= j else j + 1
        out.append(end - i)
    return out
