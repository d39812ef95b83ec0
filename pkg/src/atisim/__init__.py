"""Closed-loop simulator for a layered sensing-and-inference stack.

Layers: a reflex safety envelope for exposure/ISO (``envelope``), a contextual
bandit calibrator (``calibrator``), a synthetic camera (``sensecam``), local
and remote confidence oracles (``percept``), a router deciding between them
(``router``) and an experiment harness (``harness``).
"""

from .calibrator import BanditCalibrator
from .envelope import ReflexController
from .router import LapRouter

__version__ = "0.1.0"
__all__ = ["BanditCalibrator", "LapRouter", "ReflexController", "__version__"]
