import math

import numpy as np
import pytest

from gpfluct.config import normalize
from gpfluct.gpe import Grid, smooth_datum
from gpfluct.scattering import Potential, solve_neumann

A_WELL = 1.0 - math.tanh(1.0)


@pytest.fixture(scope="session")
def well():
    return Potential("square_well", v0=2.0, R=1.0)


@pytest.fixture(scope="session")
def zero_potential():
    return Potential("zero")


@pytest.fixture(scope="session")
def cfg():
    return normalize({})


@pytest.fixture(scope="session")
def grid8():
    return Grid(8.0, 8)


@pytest.fixture(scope="session")
def datum8(grid8):
    return smooth_datum(grid8, seed=3)


@pytest.fixture(scope="session")
def scat100(well):
    return solve_neumann(well, 100, 0.25)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
