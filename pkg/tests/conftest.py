import numpy as np
import pytest

from shocklab.flux import degenerate_quadratic, shipped_flux
from shocklab.wavetrain import solve_wavetrain_continuous, solve_wavetrain_lattice


@pytest.fixture(scope="session")
def linear():
    return shipped_flux("linear_2my")


@pytest.fixture(scope="session")
def unit():
    return shipped_flux("unit")


@pytest.fixture(scope="session")
def degenerate():
    return degenerate_quadratic()


@pytest.fixture(scope="session")
def logistic(linear):
    return solve_wavetrain_continuous(linear, 1.0)


@pytest.fixture(scope="session")
def lattice_profile(linear):
    return solve_wavetrain_lattice(linear)


@pytest.fixture(scope="session")
def degenerate_profile(degenerate):
    return solve_wavetrain_lattice(degenerate)


def logistic_exact(xi, eps=1.0):
    return 1.0 / (1.0 + np.exp(-np.asarray(xi) / (2.0 * eps)))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import SUMMARY_LINES
    if SUMMARY_LINES:
        terminalreporter.section("acceptance criteria")
        for line in SUMMARY_LINES:
            terminalreporter.write_line(line)
