"""Per-run metrics, computed from logged lap rows so replay can reproduce them."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..errors import DataError
from ..router import RecordedLap, RoutingDecision, RoutingThresholds, Verdict, route_recorded

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunMetrics:
    n_laps: int
    total_accuracy: float
    l4_call_rate: float
    mean_confidence: float
    ttfd_ms: float
    per_class_accuracy: dict = field(default_factory=dict)
    per_class_laps: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"laps": self.n_laps, "accuracy": self.total_accuracy,
                "l4_call_rate": self.l4_call_rate, "mean_confidence": self.mean_confidence,
                "ttfd_ms": self.ttfd_ms}


@dataclass(frozen=True)
class LapVerdict:
    """A lap after routing: what the runner logs and what replay recomputes."""

    decision: RoutingDecision
    correct: bool
    final_conf: float
    decided_at: float


def _parse(row: dict, key: str, kind=float, optional: bool = False):
    raw = row[key]
    if raw == "":
        if optional:
            return None
        raise DataError(f"line {row.get('_line', '?')}: column {key} is empty")
    try:
        return kind(raw)
    except ValueError as exc:
        raise DataError(f"line {row.get('_line', '?')}: column {key}: {exc}") from exc


def recorded_lap(row: dict) -> RecordedLap:
    return RecordedLap(
        peak_conf=_parse(row, "peak_conf"),
        peak_sharpness=_parse(row, "peak_sharpness"),
        local_correct=bool(_parse(row, "local_correct", int)),
        remote_conf=_parse(row, "l4_conf", optional=True),
        remote_correct=bool(_parse(row, "l4_correct", int, optional=True) or 0),
        remote_stale=bool(_parse(row, "l4_stale", int, optional=True) or 0),
    )


def route_row(row: dict, th: RoutingThresholds) -> LapVerdict:
    lap = recorded_lap(row)
    try:
        d, correct = route_recorded(lap, th, row["inference_mode"])
    except ValueError as exc:
        raise DataError(f"line {row.get('_line', '?')}: {exc}") from exc
    remote = d.verdict is Verdict.ACCEPT_REMOTE
    final_conf = lap.remote_conf if remote else lap.peak_conf
    decided = _parse(row, "lap_end_ms")
    if d.l4_called:
        # a late answer is given up on at the horizon, never waited for
        decided = min(_parse(row, "l4_arrival_ms"), _parse(row, "l4_horizon_ms"))
    return LapVerdict(d, correct, final_conf, decided)


def metrics_from_rows(rows: Iterable[dict], th: RoutingThresholds) -> RunMetrics:
    rows = list(rows)
    if not rows:
        logger.warning("no laps to score; returning zero-lap metrics")
        return RunMetrics(0, 0.0, 0.0, 0.0, 0.0)
    per_class = defaultdict(lambda: [0, 0])
    n_correct = n_called = 0
    conf_sum = ttfd_sum = 0.0
    for row in rows:
        v = route_row(row, th)
        n_correct += v.correct
        n_called += v.decision.l4_called
        conf_sum += v.final_conf
        ttfd_sum += v.decided_at - _parse(row, "lap_start_ms")
        stats = per_class[row["truth_label"]]
        stats[0] += v.correct
        stats[1] += 1
    n = len(rows)
    return RunMetrics(
        n_laps=n,
        total_accuracy=n_correct / n,
        l4_call_rate=n_called / n,
        mean_confidence=conf_sum / n,
        ttfd_ms=ttfd_sum / n,
        per_class_accuracy={c: k / m for c, (k, m) in sorted(per_class.items())},
        per_class_laps={c: m for c, (_, m) in sorted(per_class.items())},
    )


def rolling_mean(values, window: int) -> list[float]:
    out, acc = [], 0.0
    vals = list(values)
    for i, v in enumerate(vals):
        acc += v
        if i >= window:
            acc -= vals[i - window]
        out.append(acc / min(i + 1, window))
    return out


def summarize(m: RunMetrics, label: Optional[str] = None) -> str:
    head = f"{label}: " if label else ""
    return (f"{head}laps={m.n_laps} accuracy={m.total_accuracy:.3f} "
            f"l4_call_rate={m.l4_call_rate:.3f} mean_conf={m.mean_confidence:.3f} ttfd_ms={m.ttfd_ms:.1f}")
