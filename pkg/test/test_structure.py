import numpy as np
import pytest

from waveop import oracles, structure
from waveop.config import config
from waveop.lfun import LProfile, compute_L, triple_norm
from waveop.norms import GateResult
from waveop.utils.fields import gaussian_packet
from waveop.utils.general import DivergenceError, GateError, SingularPointError, rel_l2
from waveop.utils.quadrature import DirectionSet


@pytest.fixture
def L(gaussian, dirs):
    return compute_L(gaussian, dirs)


@pytest.fixture
def small_probe():
    return gaussian_packet(32, 12.0, 0.7)


def test_reflection(rng):
    w = np.array([0.0, 0.6, 0.8])
    x = rng.normal(size=(20, 3))
    y = structure.reflect(x, w)
    np.testing.assert_allclose(structure.reflect(y, w), x, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), np.linalg.norm(x, axis=1), rtol=1e-14)
    np.testing.assert_allclose(y @ w, -(x @ w), atol=1e-14)
    with pytest.raises(ValueError):
        structure.reflect(x, [1.0, 1.0, 0.0])


def test_g1_total_variation_is_triple_norm(L):
    g = structure.build_g1(L)
    assert g.order == 1 and len(g.components) == 1
    assert g.total_variation == pytest.approx(triple_norm(L), rel=1e-14)
    assert g.scaled_total_variation == pytest.approx(abs(config.KL_CONSTANT) * triple_norm(L), rel=1e-14)


def test_measure_save_load(L, tmp_path):
    g = structure.build_g1(L, eps=0.1)
    h = structure.StructureMeasure.load(g.save(tmp_path / 'g1'))
    assert h.order == 1 and h.eps == 0.1
    assert h.constant == pytest.approx(g.constant)
    np.testing.assert_allclose(h.components[0].profile.values, L.values)
    assert h.total_variation == pytest.approx(g.total_variation, rel=1e-12)


def test_apply_is_homogeneous(L, small_probe):
    g = structure.build_g1(L)
    a = structure.apply_structure(g, small_probe, workers=1)
    b = structure.apply_structure(g, small_probe.like(3.0 * small_probe.values), workers=1)
    np.testing.assert_allclose(b.values, 3.0 * a.values, rtol=1e-12, atol=1e-15)


def test_zero_measure_and_zero_field(L, small_probe):
    zero = LProfile(L.r, np.zeros_like(L.values), L.dirs, np.zeros_like(L.tail_mass))
    g0 = structure.build_g1(zero)
    assert g0.is_zero()
    assert not np.any(structure.apply_structure(g0, small_probe).values)
    g = structure.build_g1(L)
    assert not np.any(structure.apply_structure(g, small_probe.like(np.zeros_like(small_probe.values))).values)
    with pytest.raises(ValueError):
        structure.apply_structure(g, small_probe, method='fft')


@pytest.mark.slow
def test_lines_match_pointwise(L, small_probe):
    g = structure.build_g1(L)
    a = structure.apply_structure(g, small_probe, 'cubic', method='lines')
    b = structure.apply_structure(g, small_probe, 'cubic', method='pointwise')
    assert np.linalg.norm(a.values - b.values) / np.linalg.norm(b.values) < 2e-2


def test_kernel_l1_at_origin(L):
    K = structure.W1Kernel(L)
    # |L| is even for a real radial potential
    assert K.linf_l1(np.zeros(3)) == pytest.approx(abs(config.KL_CONSTANT) * triple_norm(L) / 2, rel=1e-3)
    assert K.linf_l1(np.array([0.5, 0.0, 0.0])) > 0


def test_kernel_evaluation(L):
    K = structure.W1Kernel(L, eps=0.2)
    with pytest.raises(SingularPointError):
        K(np.zeros(3), np.zeros(3))
    x, j, s = np.array([0.3, -0.1, 0.2]), 5, np.array([0.5, 1.0, 2.5])
    z = s[:, None] * L.dirs.directions[j]
    np.testing.assert_allclose(K(np.broadcast_to(x, z.shape), z) * s ** 2, K.along(x, j, s), rtol=1e-12)
    with pytest.raises(ValueError):
        structure.W1Kernel(L, eps=-1.0)


def test_fit_ratio():
    assert structure.fit_ratio([1.0, 0.5, 0.25, 0.125]) == pytest.approx(0.5)
    assert structure.fit_ratio([2.0]) == 0.0
    assert structure.fit_ratio([1.0, 0.0, 0.1]) == pytest.approx(0.1)


def test_born_sum_respects_gate(weak_gaussian, small_probe):
    with pytest.raises(GateError):
        structure.born_sum(weak_gaussian, small_probe, gate=GateResult(False, 2.0, None, 'too strong'))
    with pytest.raises(GateError):
        structure.build_g2(weak_gaussian, gate=GateResult(False, 2.0, None, 'too strong'))


@pytest.mark.slow
@pytest.mark.oracle
def test_calibrated_constant(weak_gaussian, probe):
    c, residual = structure.calibrate_kl_constant(weak_gaussian, probe, DirectionSet.gauss_product(8))
    assert abs(c - config.KL_CONSTANT) < 5e-2 * abs(config.KL_CONSTANT)
    assert residual < 5e-2


@pytest.mark.slow
def test_g2_total_variation_is_quadratic(weak_gaussian):
    kw = dict(dirs=DirectionSet.gauss_product(2), yprime_n=2, yprime_order=2, grid_n=16, tol=1.0, workers=1)
    a = structure.build_g2(weak_gaussian, **kw)
    b = structure.build_g2(weak_gaussian * 2.0, **kw)
    assert b.total_variation == pytest.approx(4 * a.total_variation, rel=1e-6)
    assert len(a.components) == 2 * 8


def _fixed_orders(scales):
    # stationary recursion stand-in: order n is scales[n] * f
    def iterate(V, f, eps, n, tol=None, **kwargs):
        return oracles.BornTerms([f.like(s * f.values) for s in scales], list(scales), eps, 'free')
    return iterate


@pytest.mark.parametrize('scales', [[1.0, 2.0, 1.5], [1.0, 0.5, 0.8, 0.4], [0.5, 0.5]])
def test_born_sum_rejects_growing_orders(monkeypatch, weak_gaussian, small_probe, scales):
    monkeypatch.setattr(oracles, 'ls_born_iterate', _fixed_orders(scales))
    with pytest.raises(DivergenceError):
        structure.born_sum(weak_gaussian, small_probe, n_max=len(scales))


def test_born_sum_adds_decaying_orders(monkeypatch, weak_gaussian, small_probe):
    monkeypatch.setattr(oracles, 'ls_born_iterate', _fixed_orders([0.5, 0.25, 0.125]))
    out = structure.born_sum(weak_gaussian, small_probe, n_max=3)
    np.testing.assert_allclose(out.field.values, 1.875 * small_probe.values, rtol=1e-14)
    np.testing.assert_allclose(out.norms, [0.5, 0.25, 0.125], rtol=1e-12)
    assert out.ratio == pytest.approx(0.5)


@pytest.mark.slow
@pytest.mark.oracle
def test_born_sum_decays_and_isometry_improves(weak_gaussian):
    deviation = []
    for n, eps in ((32, 0.2), (64, 0.1)):
        f = gaussian_packet(n, 24.0, 1.0, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
        out = structure.born_sum(weak_gaussian, f, eps=eps, n_max=4, tol=1e-12, workers=2)
        assert len(out.norms) == 4
        assert all(b < a for a, b in zip(out.norms, out.norms[1:]))
        assert out.ratio < 0.5
        deviation.append(abs(out.field.norm() / f.norm() - 1))
    assert deviation[1] < deviation[0]


@pytest.mark.slow
@pytest.mark.oracle
def test_g2_matches_second_stationary_term(weak_gaussian, probe):
    g2 = structure.build_g2(weak_gaussian, DirectionSet.gauss_product(8), workers=4)
    w2 = structure.apply_structure(g2, probe, workers=4)
    ls2 = oracles.ls_born_iterate(weak_gaussian, probe, eps=0.0, n=2, workers=4).terms[1]
    assert rel_l2(w2.values, ls2.values) <= 5e-2
