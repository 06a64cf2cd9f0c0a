import math

import numpy as np
import pytest

from waveop.utils.quadrature import DirectionSet, composite_gauss_legendre, filon_corrections, filon_fourier


@pytest.mark.parametrize('rule', ['gauss_product', 'lebedev'])
def test_direction_weights(rule):
    d = DirectionSet.build(rule)
    assert d.weights.sum() == pytest.approx(4 * math.pi)
    np.testing.assert_allclose(np.linalg.norm(d.directions, axis=1), 1.0)
    assert d.integrate(d.directions[:, 2] ** 2) == pytest.approx(4 * math.pi / 3)


def test_gauss_product_polynomial_exactness():
    d = DirectionSet.gauss_product(4)
    x, y, z = d.directions.T
    assert d.integrate(x ** 2 * y ** 2 * z ** 2) == pytest.approx(4 * math.pi / 105)
    assert d.integrate(x * y ** 3) == pytest.approx(0.0, abs=1e-14)


def test_unknown_rule():
    with pytest.raises(ValueError):
        DirectionSet.build('fibonacci')


def test_composite_gauss_legendre():
    x, w = composite_gauss_legendre([0.0, 1.0, 2.0], 3)
    assert w @ x ** 3 == pytest.approx(4.0)
    assert len(x) == 6


def test_filon_fourier_damped_exponential():
    d, M, n_fft = 0.01, 1000, 4096
    t = d * np.arange(M + 1)
    m = np.arange(0, 50)
    omega = 2 * math.pi * m / (n_fft * d)
    got = filon_fourier(np.exp(-t), d, m, n_fft)
    T = M * d
    exact = (1 - np.exp((-1 + 1j * omega) * T)) / (1 - 1j * omega)
    np.testing.assert_allclose(got, exact, rtol=1e-7, atol=1e-9)


def test_filon_corrections_branches_agree():
    # same theta through the series and the closed form
    w1, a1 = filon_corrections([0.03], limit=1.0)
    w2, a2 = filon_corrections([0.03], limit=0.0)
    assert w1[0] == pytest.approx(w2[0], rel=1e-7)
    np.testing.assert_allclose(a1, a2, rtol=1e-7, atol=1e-9)


def test_filon_fourier_guards():
    with pytest.raises(ValueError):
        filon_fourier(np.ones(20), 0.1, [0], 16)
    with pytest.raises(ValueError):
        filon_fourier(np.ones(10), 0.1, [8], 16)
