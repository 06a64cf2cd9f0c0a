import math

import numpy as np
import pytest

from waveop.potentials import (GaussianPotential, GridPotential, RadialTablePotential, SolitonPotential,
                               brute_fourier, from_descriptor, radial_fourier_direct, rescale, zero_potential)
from waveop.utils.fields import Field3D
from waveop.utils.general import ConfigError, DomainError, ResolutionError


def test_gaussian_fourier_at_zero(gaussian):
    assert gaussian.fourier(np.zeros(3)) == pytest.approx(math.pi ** 1.5)


def test_gaussian_fourier_matches_riemann_sum(gaussian):
    xi = np.array([0.5, 0.3, -0.2])
    assert gaussian.fourier(xi) == pytest.approx(brute_fourier(gaussian, xi, n=64), rel=1e-6)


@pytest.mark.parametrize('k', [0.0, 1.3, 4.0])
def test_gaussian_radial_fourier_direct(gaussian, k):
    assert gaussian.fourier_radial(k).real == pytest.approx(radial_fourier_direct(gaussian, k), rel=1e-8)


def test_soliton_fourier_at_zero():
    V = SolitonPotential(0.3, 2.0)
    expected = -0.3 * 3 * math.sqrt(3) * math.pi ** 2 / 2.0
    assert V.fourier_radial(0.0).real == pytest.approx(expected)


@pytest.mark.parametrize('V', [GaussianPotential(0.7, 1.5), SolitonPotential(0.4, 0.8)])
@pytest.mark.parametrize('lam', [0.5, 2.0, 4.0])
def test_rescale_definition(V, lam, rng):
    x = rng.normal(size=(16, 3))
    np.testing.assert_allclose(rescale(V, lam)(x), lam ** 2 * V(lam * x), rtol=1e-12)


def test_rescale_rejects_nonpositive(gaussian):
    with pytest.raises(ValueError):
        rescale(gaussian, 0.0)


def test_coupling_scaling(soliton, rng):
    x = rng.normal(size=(8, 3))
    np.testing.assert_allclose((3 * soliton)(x), 3 * soliton(x))
    np.testing.assert_allclose((soliton * 3).fourier_radial([0.1, 1.0]), 3 * soliton.fourier_radial([0.1, 1.0]))


def test_zero_potential_vanishes():
    V = zero_potential()
    assert V.fourier(np.ones(3)) == 0
    assert V.l2_norm() == 0


def test_points_must_be_three_dimensional(gaussian):
    with pytest.raises(ValueError):
        gaussian(np.zeros((4, 2)))


def test_from_descriptor_roundtrip():
    V = SolitonPotential(0.2, 1.5)
    W = from_descriptor(V.descriptor())
    assert W.digest() == V.digest()
    with pytest.raises(ConfigError):
        from_descriptor({'kind': 'yukawa'})


def test_radial_table_follows_samples(gaussian):
    r = np.linspace(0, 5, 101)
    T = RadialTablePotential(r, gaussian.profile(r))
    x = np.array([[1.05, 0.0, 0.0], [0.0, 2.33, 0.0]])
    np.testing.assert_allclose(T(x), gaussian(x), atol=1e-4)
    assert T.fourier_radial(1.0).real == pytest.approx(gaussian.fourier_radial(1.0).real, rel=1e-3)


def test_radial_table_rejects_unsorted():
    with pytest.raises(ValueError):
        RadialTablePotential([0, 2, 1, 3], [1, 1, 1, 1])


def _grid_gaussian(n=32, box=12.0):
    f = Field3D.centered(n, box)
    f.values = np.exp(-np.sum(f.points() ** 2, axis=-1)).reshape(n, n, n)
    return GridPotential(f)


def test_grid_potential_fourier_at_nodes(gaussian):
    G = _grid_gaussian()
    dk = 2 * math.pi / (2 * 12.0)
    xi = np.array([dk, 2 * dk, 0.0])
    assert G.fourier(xi) == pytest.approx(gaussian.fourier(xi), rel=1e-8)


def test_grid_potential_bounds():
    G = _grid_gaussian()
    with pytest.raises(ResolutionError):
        G.fourier(np.array([1.01 * G.max_frequency, 0.0, 0.0]))
    with pytest.raises(DomainError):
        G(np.array([[7.0, 0.0, 0.0]]))


def test_functional_entry_points(gaussian):
    from waveop.potentials import eval_potential, fourier_potential
    x = np.array([[0.3, 0.1, -0.2]])
    assert eval_potential(gaussian, x) == pytest.approx(gaussian(x))
    assert fourier_potential(gaussian, np.zeros(3)) == pytest.approx(math.pi ** 1.5)
