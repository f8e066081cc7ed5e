import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kgres.spectral import SpectralGrid

settings.register_profile(
    "kgres", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("kgres")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid1():
    return SpectralGrid(1, 256, 20.0)


@pytest.fixture(scope="session")
def grid_soliton():
    # large enough box for the sech tail check at the edge
    return SpectralGrid(1, 1024, 40.0)



# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
