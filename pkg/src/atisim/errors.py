"""Exception types shared across the simulator."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration (CLI exit code 1)."""


class DataError(ValueError):
    """Malformed log, policy or table file (CLI exit code 2)."""


class EmptyLapError(ValueError):
    """A lap finished without any frames, so no reward or decision exists."""
