import numpy as np
import pytest

from dbarlab.grid import build_grid
from dbarlab.weights import WeightModel


@pytest.fixture(scope="session")
def fock():
    return WeightModel.monomial(2)


@pytest.fixture(scope="session")
def quartic():
    return WeightModel.monomial(4)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(2.0, 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)
