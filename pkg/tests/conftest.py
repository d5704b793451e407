import numpy as np
import pytest

from qlweb import generator
from qlweb.hopf import Grid, InitialData

KAPPA = (1.5, 3.0, 4.5, 6.5)
TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="session")
def euler4():
    return generator.euler(4)


@pytest.fixture(scope="session")
def generic_sq():
    """Reciprocal image of Euler with f = u^2/2, g = 1."""
    return generator.generic_image(["u^2/2"] * 4, ["1"] * 4)


@pytest.fixture(scope="session")
def lindeg():
    return generator.lindeg_image([0, 1, 2, 3], ["u"] * 4, ["1"] * 4)


@pytest.fixture(scope="session")
def control4():
    return generator.perturbed_control(4)


def sine_data(interval=(-50.0, 60.0)):
    return InitialData.parse([f"{k} + 0.1*sin(x)" for k in KAPPA], interval)


def web_grid(N):
    return Grid(0.0, 0.5, N, 0.0, TWO_PI, N)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
