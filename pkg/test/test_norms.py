import math

import numpy as np
import pytest
from scipy import integrate

from waveop import lfun, norms
from waveop.potentials import GaussianPotential, SolitonPotential, rescale


def _gaussian_b_norm(a=1.0, sigma=1.0):
    # int ds 2 pi^2 int |M_s(t)| dt with M_s = 4 pi a e^{-s^2/sigma^2} J(t/sigma)
    t = np.linspace(-400, 400, 400001)
    j = np.abs(lfun.gaussian_J(t))
    jint = integrate.trapezoid(j, t) + 2 * j[-1] * 400.0
    return 2 * math.pi ** 2 * 4 * math.pi * abs(a) * math.sqrt(math.pi) * sigma ** 2 * jint


def test_b_norm_of_gaussian(gaussian):
    assert norms.b_norm(gaussian, norms.plane_normals(2)) == pytest.approx(_gaussian_b_norm(), rel=1e-3)


def test_triple_norm_below_b_norm(gaussian, dirs):
    t = lfun.triple_norm(lfun.compute_L(gaussian, dirs))
    assert t <= norms.b_norm(gaussian, norms.plane_normals(2)) * (1 + 1e-3)


@pytest.mark.parametrize('lam', [0.5, 2.0, 4.0])
def test_dyadic_half_norm_scaling(soliton, lam):
    assert norms.dyadic_norm(rescale(soliton, lam), 0.5) == pytest.approx(norms.dyadic_norm(soliton, 0.5), rel=1e-10)


def test_dyadic_norm_arguments(gaussian):
    with pytest.raises(ValueError):
        norms.dyadic_norm(gaussian, -0.5)
    assert norms.dyadic_norm(gaussian, 0.0, homogeneous=False) > norms.ball_l2(gaussian)


def test_littlewood_paley_partition():
    rho = np.geomspace(0.3, 50.0, 101)
    total = sum(norms.lp_window(rho / 2.0 ** k) for k in range(-10, 12))
    np.testing.assert_allclose(total, 1.0, atol=1e-12)
    assert norms.lp_bump(0.5) == 1.0 and norms.lp_bump(2.5) == 0.0


def test_h_half_norm_drops_constants():
    assert norms.h_half_norm_2d(np.ones((16, 16)), 0.5) == pytest.approx(0.0, abs=1e-12)
    assert norms.angular_multiplier_check(np.zeros((8, 8))) is None


def test_lorentz_norm_of_gaussian():
    c = (4 * math.pi / 3) ** (-1.0 / 3.0) * 4 * math.pi
    assert norms.lorentz_321_norm(GaussianPotential(2.0, 1.0)) == pytest.approx(c, rel=1e-6)


def _report(b=0.3, half=0.4, c0=1.0):
    return norms.NormReport(b_norm=b, b_star_norm=0.5, dyadic_half=half, triple=0.2, c0=c0)


def test_smallness_gate():
    assert norms.smallness_gate(_report()).passed
    g = norms.smallness_gate(_report(), c0=0.5)
    assert not g.passed and 'c0' in g.reason
    assert g.margin == pytest.approx(1.4)
    g = norms.smallness_gate(_report(), born_ratio=1.2)
    assert not g.passed and 'Born ratio' in g.reason


def test_report_fields():
    d = _report().as_dict()
    assert d['b_star_total'] == pytest.approx(0.7)
    assert d['smallness_margin'] == pytest.approx(0.7)


def test_plane_normals_are_distinct():
    n = norms.plane_normals(4)
    assert np.all(n.directions[:, 2] > 0)
    assert n.weights.sum() == pytest.approx(4 * math.pi)


def test_default_normals_cover_the_hemisphere():
    n = norms.plane_normals()
    assert n.directions.shape[0] == 64
    # widest gap between a hemisphere direction and its nearest normal
    d = np.random.default_rng(0).normal(size=(2000, 3))
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    d[:, 2] = np.abs(d[:, 2])
    assert np.arccos(np.clip(d @ n.directions.T, -1, 1)).min(axis=1).max() < 0.5


@pytest.mark.parametrize('a, sigma', [(0.5, 1.0), (2.0, 0.5), (-1.0, 3.0)])
def test_lorentz_norm_of_gaussian_family(a, sigma):
    c = (4 * math.pi / 3) ** (-1.0 / 3.0) * 4 * math.pi
    assert norms.lorentz_321_norm(GaussianPotential(a, sigma)) == pytest.approx(0.5 * c * abs(a) * sigma ** 2, rel=1e-6)


def test_lorentz_norm_scaling(soliton):
    base = norms.lorentz_321_norm(soliton)
    assert norms.lorentz_321_norm(rescale(soliton, 2.0)) == pytest.approx(base, rel=1e-4)
    assert norms.lorentz_321_norm(soliton * 3.0) == pytest.approx(3 * base, rel=1e-10)


def _grid(n, h):
    ax = h * (np.arange(n) - n // 2)
    return np.meshgrid(ax, ax, indexing='ij')


def test_angular_multiplier_is_scale_free():
    ratios = []
    for w in (0.5, 1.0, 2.0):
        X, Y = _grid(64, w / 8)
        out = norms.angular_multiplier_check(np.exp(-(X ** 2 + Y ** 2) / w ** 2), w / 8)
        assert out['x'] == pytest.approx(out['y'], rel=1e-10)
        ratios.append(out['max'])
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)
    assert 0 < ratios[0] < 5


def test_angular_multiplier_away_from_origin():
    X, Y = _grid(128, 0.25)
    out = norms.angular_multiplier_check(np.exp(-((X - 5.0) ** 2 + Y ** 2)), 0.25)
    # x/|x| is close to (1, y/5) on the bump
    assert out['x'] == pytest.approx(1.0, abs=0.05)
    assert out['y'] < 0.5


@pytest.mark.slow
@pytest.mark.parametrize('lam', [0.5, 2.0])
def test_b_star_norm_scaling(gaussian, lam):
    normals = norms.plane_normals(2)
    base = norms.b_star_norm(gaussian, normals, s_points=25)
    assert norms.b_star_norm(rescale(gaussian, lam), normals, s_points=25) == pytest.approx(base, rel=1e-3)


@pytest.mark.slow
def test_b_norm_controlled_by_b_star():
    normals = norms.plane_normals(2)
    g = GaussianPotential(1.0, 1.0)
    ratios = []
    for V in (g, rescale(g, 2.0), GaussianPotential(-0.3, 2.0), SolitonPotential(0.2, 1.0)):
        ratios.append(norms.b_norm(V, normals, s_points=25) / norms.b_star_norm(V, normals, s_points=25))
    # one shape, one ratio
    assert ratios[1] == pytest.approx(ratios[0], rel=1e-3)
    assert ratios[2] == pytest.approx(ratios[0], rel=1e-3)
    assert min(ratios) > 0 and max(ratios) / min(ratios) < 10
