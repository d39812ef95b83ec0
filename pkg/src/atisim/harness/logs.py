"""CSV logs with fixed column order and fixed-precision numbers."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import DataError

FRAME_COLUMNS = (
    "timestamp_ms", "lap", "lux", "acc_mag", "gyro_mag", "exp_idx", "exp_s", "iso",
    "mean_brightness", "lapvar", "saturation_ratio", "l3_conf", "l3_label", "truth_label",
    "visible", "mode",
)
# the first fifteen columns are the fixed RL-log layout; the rest carry what replay needs
LAP_COLUMNS = (
    "lap", "motion_bin", "light_bin", "d_iso", "d_exp", "reward", "epsilon", "q_after",
    "peak_conf", "peak_sharpness", "decision", "reason", "l4_called", "l4_conf", "correct",
    "truth_label", "local_correct", "l4_correct", "l4_stale", "inference_mode",
    "lap_start_ms", "lap_end_ms", "l4_arrival_ms", "l4_horizon_ms",
)
POLICY_COLUMNS = ("motion_bin", "light_bin", "d_iso", "d_exp", "visits", "q")


def fmt(value) -> str:
    """Render one cell: floats with 6 decimals, booleans as 0/1, None as empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"cannot log non-finite value {value}")
        s = f"{value:.6f}"
        return "0.000000" if s == "-0.000000" else s
    return str(value)


def round6(x: float) -> float:
    """The value a logged float reads back as."""
    return float(fmt(float(x)))


def format_row(columns: Sequence[str], row: dict) -> list[str]:
    return [fmt(row.get(c)) for c in columns]


def csv_text(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(format_row(columns, row))
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(columns, rows))
    return path


def read_csv(path, columns: Sequence[str]) -> list[dict]:
    """Read a log, checking the header; errors carry the offending line number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != tuple(columns):
            raise DataError(f"{path}:1: unexpected header {header}")
        rows = []
        for lineno, values in enumerate(reader, start=2):
            if len(values) != len(columns):
                raise DataError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(values)}")
            rows.append(dict(zip(columns, values), _line=lineno))
    return rows
