import math
import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from diffadv.kernel import Geometry, Medium, Scenario, default_scenario  # noqa: E402
from diffadv.wind import WindModel  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

D_HEXENYL = 6.7698e-6
S2 = math.sqrt(2.0) / 2.0


@pytest.fixture
def advection():
    """Directed-wind operating point: mu = 0.5 m/s, sigma_v^2 = 1e-6 m^2/s."""
    return default_scenario()


@pytest.fixture
def dispersive():
    """mu = 0.07 m/s, sigma_v^2 = 0.0025 m^2/s (Pe about 28)."""
    return default_scenario(mean_speed=0.07, intensity=0.0025)


@pytest.fixture
def diffusive():
    """mu = 0.5 m/s, sigma_v^2 = 0.16 m^2/s (Pe about 3)."""
    return default_scenario(mean_speed=0.5, intensity=0.16)


@pytest.fixture
def mc_scenario():
    """Broad puff and strong meander so Monte Carlo averages converge quickly."""
    return Scenario(
        Geometry((0.0, 0.0, 1.0), (S2, S2, 1.0)),
        Medium(0.005),
        WindModel.white(0.3, 0.004),
    )


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """``report(tag, ok, detail)`` records a PASS/FAIL line and returns ``ok``."""

    def _report(tag: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  criterion {tag}: {detail}")
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
