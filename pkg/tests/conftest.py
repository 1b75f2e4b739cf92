import numpy as np
import pytest

from hardy_nls.grid import PhysParams, build_grid
from hardy_nls.ground_state import discrete_ground_state
from hardy_nls.spectral import solve_trichotomy

A_REF = -0.04
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def params():
    return PhysParams(A_REF)


@pytest.fixture(scope="session")
def small(params):
    """Coarse model for fast unit tests."""
    g = build_grid(params, 256, 200.0)
    return discrete_ground_state(params, g)


@pytest.fixture(scope="session")
def model(params):
    g = build_grid(params, 512, 200.0)
    return discrete_ground_state(params, g)


@pytest.fixture(scope="session")
def trich(params, model):
    return solve_trichotomy(params, model.grid, model)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {msg}")
