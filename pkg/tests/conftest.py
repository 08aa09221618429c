import math

import numpy as np
import pytest

from rydberg_ati.atomic import default_species
from rydberg_ati.pair import CouplingField, PairHamiltonian, build_basis

TWO_PI = 2 * math.pi

# a reduced manifold keeps full diagonalizations cheap
SMALL_RYDBERG = [(38, 0, 0.5), (39, 0, 0.5), (38, 1, 0.5), (38, 1, 1.5)]


@pytest.fixture(scope="session")
def species():
    return default_species()


@pytest.fixture(scope="session")
def small_basis():
    return build_basis(SMALL_RYDBERG)


@pytest.fixture(scope="session")
def small_ham(small_basis, species):
    return PairHamiltonian(small_basis, CouplingField(TWO_PI * 31.0), species)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
