from __future__ import annotations

import logging

import pytest

from atisim.harness.experiments import train
from atisim.harness.presets import PUBLISHED_SEED, dark_single

_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    n, text = m.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        ok = rep.outcome == "passed"
        prev = _CRITERIA.get(n, (True, text))[0]
        _CRITERIA[n] = (prev and ok, text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, text = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture(autouse=True)
def _quiet_harness(caplog):
    caplog.set_level(logging.ERROR, logger="atisim")
    yield


@pytest.fixture(scope="session")
def dark_training():
    """Bandit trained on the dark moving track (270 laps)."""
    return train(dark_single(PUBLISHED_SEED, 270))


@pytest.fixture(scope="session")
def two_light_training():
    """Bandit trained on stationary dark and bright runs, for the alternating-light comparison."""
    return train(dark_single(PUBLISHED_SEED, 270), light_levels=(10.0, 200.0))
