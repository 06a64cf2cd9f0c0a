import numpy as np
import pytest

from waveop.potentials import GaussianPotential, SolitonPotential
from waveop.utils.fields import gaussian_packet
from waveop.utils.quadrature import DirectionSet


@pytest.fixture
def gaussian():
    return GaussianPotential(1.0, 1.0)


@pytest.fixture
def weak_gaussian():
    return GaussianPotential(0.1, 1.0)


@pytest.fixture
def soliton():
    return SolitonPotential(0.05, 1.0)


@pytest.fixture
def dirs():
    return DirectionSet.gauss_product(4)


@pytest.fixture
def probe():
    # 32^3 packet on a 24-wide box
    return gaussian_packet(32, 24.0, 1.0, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
