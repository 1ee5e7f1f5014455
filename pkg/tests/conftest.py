import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from atdipole.constants import mhz_to_rad
from atdipole.lineshape import (
    PAPER_W_MAJ,
    PAPER_W_MIN,
    BeamGeometry,
    QuadratureConfig,
    default_sweep,
    paper_cloud,
    paper_instrument,
)
from atdipole.species import load_species

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rb87():
    return load_species("rb87")


@pytest.fixture(scope="session")
def hydrogen():
    return load_species("hydrogen")


@pytest.fixture(scope="session")
def cloud():
    return paper_cloud()


@pytest.fixture(scope="session")
def inst():
    return paper_instrument()


@pytest.fixture(scope="session")
def sweep():
    return default_sweep()


@pytest.fixture(scope="session")
def coarse_sweep():
    return default_sweep(80.0, 0.5)


@pytest.fixture(scope="session")
def coarse_quad():
    return QuadratureConfig(24, 24)


@pytest.fixture
def paper_beam():
    def make(rabi_mhz=30.0):
        return BeamGeometry(PAPER_W_MAJ, PAPER_W_MIN, mhz_to_rad(rabi_mhz))

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from report import LINES

    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
