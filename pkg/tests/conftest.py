import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dispersion_lab.grid import SpectralField, make_grid

settings.register_profile(
    "lab", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture]
)
settings.load_profile("lab")


def random_field(grid, seed=0, band=None):
    """Complex Gaussian coefficients, optionally cut to ``|xi| <= band``."""
    rng = np.random.default_rng(seed)
    c = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    if band is not None:
        c = np.where(grid.xi_abs <= band, c, 0)
    return SpectralField(grid, c)


@pytest.fixture
def grid3():
    return make_grid(3, 16, 2.0)


@pytest.fixture
def grid2():
    return make_grid(2, 32, 4.0)


# verdict lines of the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
