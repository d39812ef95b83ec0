"""Offline re-routing of a recorded lap log under new thresholds."""

from __future__ import annotations

import logging

from ..router import RoutingThresholds
from .logs import LAP_COLUMNS, read_csv
from .metrics import RunMetrics, metrics_from_rows

logger = logging.getLogger(__name__)


def replay(log_path, thresholds: RoutingThresholds) -> RunMetrics:
    """Recompute decisions and metrics from a lap log without re-simulating capture."""
    rows = read_csv(log_path, LAP_COLUMNS)
    if not rows:
        logger.warning("%s holds no laps", log_path)
    return metrics_from_rows(rows, thresholds)
