"""Experiment harness: configuration, simulation runs, logs and metrics."""

from .autoexposure import autoexposure_step
from .config import ExperimentConfig, config_from_dict, dump_config, load_config
from .metrics import RunMetrics, metrics_from_rows
from .runner import RunResult, run_experiment

__all__ = [
    "ExperimentConfig", "RunMetrics", "RunResult", "autoexposure_step", "config_from_dict",
    "dump_config", "load_config", "metrics_from_rows", "run_experiment",
]
