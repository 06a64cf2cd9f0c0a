import math

import numpy as np
import pytest
from scipy import integrate

from waveop import lfun
from waveop.potentials import GaussianPotential, SolitonPotential, rescale


@pytest.fixture
def L_gauss(gaussian, dirs):
    return lfun.compute_L(gaussian, dirs)


def test_gaussian_closed_form(L_gauss):
    exact = lfun.gaussian_L(L_gauss.r)
    scale = np.abs(exact).max()
    np.testing.assert_allclose(L_gauss.values, np.broadcast_to(exact, L_gauss.values.shape), atol=1e-6 * scale)


def test_gaussian_L_at_origin():
    # L(0) = int V^(-tau w) tau dtau = 2 a pi^{3/2} sigma
    assert lfun.gaussian_L(0.0, 1.5, 2.0) == pytest.approx(2 * 1.5 * math.pi ** 1.5 * 2.0)


def test_triple_norm_of_gaussian(L_gauss):
    r = np.linspace(-400, 400, 400001)
    direct = 4 * math.pi * integrate.trapezoid(np.abs(lfun.gaussian_L(r)), r)
    direct += 4 * math.pi * 2 * abs(lfun.gaussian_L(400.0)) * 400.0  # c/r^2 tails
    assert lfun.triple_norm(L_gauss) == pytest.approx(direct, rel=1e-4)


@pytest.mark.parametrize('V', [GaussianPotential(1.0, 1.0), GaussianPotential(-0.3, 2.0), SolitonPotential(0.2, 1.0)])
def test_plancherel_ratio(V, dirs):
    out = lfun.plancherel_check(V, dirs)
    assert out['ratio'] == pytest.approx(lfun.KAPPA, rel=1e-3)


@pytest.mark.parametrize('lam', [0.5, 2.0])
def test_triple_norm_scaling_invariance(gaussian, dirs, lam):
    t = lfun.triple_norm(lfun.compute_L(gaussian, dirs))
    assert lfun.triple_norm(lfun.compute_L(rescale(gaussian, lam), dirs)) == pytest.approx(t, rel=1e-3)


def test_coupling_linearity(soliton, dirs):
    a = lfun.compute_L(soliton, dirs)
    b = lfun.compute_L(soliton * 3.0, dirs)
    np.testing.assert_allclose(b.values, 3 * a.values, rtol=1e-12, atol=1e-15)


def test_profile_save_load(tmp_path, L_gauss):
    L_gauss.save(tmp_path / 'L.bin')
    back = lfun.LProfile.load(tmp_path / 'L.bin')
    np.testing.assert_allclose(back.r, L_gauss.r, atol=1e-12)
    np.testing.assert_array_equal(back.values, L_gauss.values)
    assert lfun.triple_norm(back) == pytest.approx(lfun.triple_norm(L_gauss), rel=1e-12)


def test_cache_hit_is_identical(tmp_path, gaussian, dirs):
    a = lfun.cached_L(gaussian, dirs, tmp_path)
    assert len(list(tmp_path.glob('L_*.bin'))) == 1
    b = lfun.cached_L(gaussian, dirs, tmp_path)
    np.testing.assert_array_equal(a.values, b.values)


def test_evaluate_outside_window(L_gauss):
    R = L_gauss.r_max
    out = L_gauss.evaluate(np.array([2 * R]))
    np.testing.assert_allclose(out[:, 0], L_gauss.values[:, -1] / 4)


def test_gaussian_slice(gaussian):
    s = 0.5
    sl = lfun.sliced_L(gaussian, np.array([0.0, 0.0, 1.0]), s)
    t = np.linspace(-400, 400, 400001)
    m = np.abs(lfun.gaussian_slice_value(1.0, 1.0, s, t))
    expected = 2 * math.pi * math.pi * (integrate.trapezoid(m, t) + 2 * m[-1] * 400.0)
    assert sl.value == pytest.approx(expected, rel=1e-3)


def test_plane_basis_orthonormal():
    n = np.array([1.0, 2.0, 2.0]) / 3
    e1, e2 = lfun.plane_basis(n)
    B = np.stack([e1, e2, n])
    np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-14)
    with pytest.raises(ValueError):
        lfun.plane_basis([1.0, 1.0, 0.0])


def test_dyadic_bound_alpha_range(gaussian):
    with pytest.raises(ValueError):
        lfun.dyadic_L_bound(gaussian, 1.5)


def _gaussian_shell_l2(k):
    # ||1_{2^k <= |r| < 2^(k+1)} L||_{L2(dr dw)} for the unit gaussian; -4 pi^{3/2} / r^2 past r = 64
    lo, hi = 2.0 ** k, 2.0 ** (k + 1)
    if hi <= 64:
        val = integrate.quad(lambda r: abs(lfun.gaussian_L(r)) ** 2, lo, hi)[0]
    else:
        val = 16 * math.pi ** 3 * (lo ** -3 - hi ** -3) / 3
    return math.sqrt(4 * math.pi * 2 * val)


def test_dyadic_bound_values(gaussian, L_gauss):
    alpha = 0.5
    rep = lfun.dyadic_L_bound(gaussian, alpha, L=L_gauss)
    lhs = sum(2.0 ** (alpha * k) * _gaussian_shell_l2(k) for k in lfun.dyadic_window(1.0))
    rhs = sum(2.0 ** (alpha * k) * math.sqrt(4 * math.pi * integrate.quad(
        lambda r: math.exp(-2 * r * r) * r * r, 2.0 ** k, 2.0 ** (k + 1))[0]) for k in range(-40, 41))
    assert rep.lhs == pytest.approx(lhs, rel=1e-3)
    assert rep.rhs == pytest.approx(rhs, rel=1e-6)
    assert rep.ratio == pytest.approx(lhs / rhs, rel=1e-3)
    assert rep.boundary_share < 1e-10
