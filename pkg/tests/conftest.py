import numpy as np
import pytest
from hypothesis import settings

from triplewell.discretization import PotentialSpec, aligned_full_grid

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")

# depth at which the lowest-band hopping is 1e-3 recoil energies (41-point sub-wells)
WORKING_DEPTH = 9.85105898415


@pytest.fixture(scope="session")
def working_depth():
    return WORKING_DEPTH


@pytest.fixture(scope="session")
def coarse_grid():
    return aligned_full_grid(9)


@pytest.fixture(scope="session")
def lattice():
    return PotentialSpec(WORKING_DEPTH)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one "CRITERION n: PASS|FAIL ..." line per acceptance criterion, shown after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
