from __future__ import annotations

import dataclasses
from pathlib import Path

import pytest

from robust_harvest.calibration import build_model
from robust_harvest.hjb import GridSpec, HarvestProblem, TerminalReward, solve
from robust_harvest.robust import UncertaintyAversion

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

# season settings: 2023 model with yearly w0, 120 days from growth-day 61
MODEL_2023 = (20.5, (0.079, 24.0, 123.0, 1.0, 2.5))
FINE = GridSpec(24000, 500)
COARSE = GridSpec(4800, 100)
STEP = TerminalReward("step", height=50.0, threshold=0.5)

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: list[str] = []


def season_problem(terminal: TerminalReward = TerminalReward(), **overrides) -> HarvestProblem:
    w0, params = MODEL_2023
    base = HarvestProblem(horizon=120.0, growth_offset=61.0, delta=0.04, h=100.0,
                          model=build_model(w0, params),
                          eta=UncertaintyAversion(0.1, "linear-decreasing"), terminal=terminal)
    return dataclasses.replace(base, **overrides) if overrides else base


class SeasonRuns:
    """Lazily solved full-resolution season runs shared across test modules."""

    def __init__(self):
        self._cache = {}

    def get(self, terminal: str, scheme: str, grid: GridSpec = FINE):
        key = (terminal, scheme, grid)
        if key not in self._cache:
            term = STEP if terminal == "step" else TerminalReward()
            self._cache[key] = solve(season_problem(term), grid, scheme)
        return self._cache[key]


@pytest.fixture(scope="session")
def season_runs():
    return SeasonRuns()


@pytest.fixture(scope="session")
def model_2023():
    w0, params = MODEL_2023
    return build_model(w0, params)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
