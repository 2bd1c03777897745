import functools

import pytest
from hypothesis import HealthCheck, settings

from schrolab.eigensolver import solve
from schrolab.potential import harmonic, radial_power

settings.register_profile(
    "repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

ACCEPTANCE_LINES = []


def report_line(label, passed, detail):
    line = f"{label:<5} {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def cached_basis(kind, d, n_axis, sigma=None, analytic=None):
    V = harmonic(d) if kind == "harmonic" else radial_power(d, 2)
    return solve(V, 1.0, n_axis, sigma=sigma, analytic=analytic)


@pytest.fixture(scope="session")
def harmonic_d2():
    """Analytic two-dimensional oscillator, enough levels for h down to 1/64."""
    return cached_basis("harmonic", 2, 110)


@pytest.fixture(scope="session")
def harmonic_d1():
    return cached_basis("harmonic", 1, 60)


@pytest.fixture(scope="session")
def quartic_d1():
    return cached_basis("quartic", 1, 120, "adapted")


@pytest.fixture(scope="session")
def quartic_d2_small():
    return cached_basis("quartic", 2, 30, "adapted")
