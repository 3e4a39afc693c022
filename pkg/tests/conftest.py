"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import numpy as np
import pytest

from odomap.geometry import Polygon
from odomap.sim import Environment, OdometryNoiseModel, SimConfig, simulate

# (criterion, passed, detail) collected by tests/test_acceptance.py
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(n: int, ok: bool, detail: str) -> None:
    line = f"AC{n} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE.append((n, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"AC{n} {'PASS' if ok else 'FAIL'}: {detail}")


def square(side: float = 1.0) -> Environment:
    return Environment(Polygon(np.array([[0, 0], [1, 0], [1, 1], [0, 1]]) * side), "square")


@pytest.fixture
def noiseless_square_trace():
    """Two laps of a 10 m square without odometry noise."""
    return simulate(square(10.0), SimConfig(laps=2), OdometryNoiseModel.uniform(0.0))
