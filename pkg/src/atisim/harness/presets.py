"""Named scenario presets used by the CLI, the bundled configs and the acceptance suite."""

from __future__ import annotations

from ..percept import OBJECT_CLASSES, RemoteOracleParams
from .config import ExperimentConfig, ObjectSpec

PUBLISHED_SEED = 2025

# local-model hardness per class: round objects are easy, the rest harder
CLASS_DIFFICULTY = {
    "teddy": 0.0, "racket": 0.3, "tennis_ball": 0.0, "ping_pong_ball": 0.0,
    "orange": 0.6, "carton": 0.35, "water_bottle": 0.25, "laptop": 0.45,
}
# plausible-but-wrong remote labels, with per-class probabilities
REMOTE_CONFUSIONS = (
    ("ping_pong_ball", "golf_ball", 0.7),
    ("racket", "tennis_racket_cover", 0.4),
)
DARK_LUX = 10.0
BRIGHT_LUX = 200.0


def dark_single(seed: int = PUBLISHED_SEED, laps: int = 270) -> ExperimentConfig:
    """One object on a dark, moving track: the bandit training scenario."""
    return ExperimentConfig(seed=seed, laps=laps).with_overrides(
        **{"scenario.scenario": "lap_track", "scenario.lux": DARK_LUX})


def eight_class(seed: int = PUBLISHED_SEED, laps: int = 240) -> ExperimentConfig:
    """All eight classes on the dark, moving track with a class-aware remote model."""
    return dark_single(seed, laps).with_overrides(
        objects=ObjectSpec(OBJECT_CLASSES, dict(CLASS_DIFFICULTY)),
        remote=RemoteOracleParams(confusable_pairs=REMOTE_CONFUSIONS, difficulty_weight=0.0),
    )


def alternating(seed: int = PUBLISHED_SEED, laps: int = 50) -> ExperimentConfig:
    """Light flips between dark and bright at every lap boundary."""
    return ExperimentConfig(seed=seed, laps=laps).with_overrides(
        **{"scenario.scenario": "alternating_light", "scenario.dark_lux": DARK_LUX,
           "scenario.bright_lux": BRIGHT_LUX})


PRESETS = {"dark_single": dark_single, "eight_class": eight_class, "alternating": alternating}
