import numpy as np
import pytest

from bcinverse.abstract_system import ControlSignal, FiniteSystem, jordan_testbed
from bcinverse.grids import TimeGrid


@pytest.fixture(scope="session")
def dim6():
    return jordan_testbed("dim6")


@pytest.fixture(scope="session")
def diag3():
    return FiniteSystem(np.diag([1 + 1j, 2.0, 3 - 0.5j]), np.eye(3))


def sine_control(grid, coeffs):
    """Finite sine series vanishing at both ends of ``grid``."""
    coeffs = np.asarray(coeffs, complex)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    m = np.arange(1, coeffs.shape[0] + 1)
    vals = np.sin(np.outer(grid.t, m) * np.pi / grid.T) @ coeffs
    vals[[0, -1]] = 0.0
    return ControlSignal(grid, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid_half():
    return TimeGrid(0.5, 400)


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for res in RESULTS:
        terminalreporter.write_line(res.line())
