import math

import numpy as np
import pytest

from waveop import oracles
from waveop.potentials import GaussianPotential, SolitonPotential, zero_potential
from waveop.utils.general import BoundStateError, ResolutionError
from waveop.utils.fields import gaussian_packet


def test_incoming_kappa_branch():
    k = oracles.incoming_kappa(1.3, 0.2)
    assert k.imag > 0
    assert k * k == pytest.approx(complex(1.3 ** 2, -0.2))
    assert oracles.incoming_kappa(1.3, 0.0) == pytest.approx(-1.3)


def test_truncated_green_limits():
    rho, eps, q = 1.0, 1.0, np.array([0.0, 0.4, 1.0, 2.5])
    got = oracles.truncated_green_ft(q, rho, eps, 200.0)
    np.testing.assert_allclose(got, 1.0 / (q ** 2 - rho ** 2 + 1j * eps), rtol=1e-10)


@pytest.mark.parametrize('eps', [0.0, 0.3])
def test_truncated_green_continuous_at_zero(eps):
    g = oracles.truncated_green_ft(np.array([0.0, 1e-5]), 0.8, eps, 12.0)
    assert g[0] == pytest.approx(g[1], rel=1e-6)


def test_truncated_sinc_continuous_at_zero():
    s = oracles.truncated_sinc_ft(np.array([0.0, 1e-5]), 1.7, 9.0)
    assert s[0] == pytest.approx(s[1], rel=1e-6)


def test_zero_potential_has_no_born_terms(probe):
    out = oracles.ls_born_iterate(zero_potential(), probe, n=2)
    assert out.norms == [0.0, 0.0]


def test_ls_arguments(probe, weak_gaussian):
    with pytest.raises(ValueError):
        oracles.ls_born_iterate(weak_gaussian, probe, n=0)
    with pytest.raises(ValueError):
        oracles.ls_born_iterate(weak_gaussian, probe, eps=-1.0)
    with pytest.raises(ValueError):
        oracles.ls_born_iterate(weak_gaussian, probe, mode='spectral')
    with pytest.raises(ResolutionError):
        oracles.ls_born_iterate(weak_gaussian, probe, eps=1e-3, mode='periodic')


@pytest.mark.parametrize('mode,eps', [('periodic', 0.05), ('free', 0.0)])
def test_born_terms_homogeneous_in_coupling(probe, weak_gaussian, mode, eps):
    a = oracles.ls_born_iterate(weak_gaussian, probe, eps, 2, mode=mode)
    b = oracles.ls_born_iterate(weak_gaussian * 2.0, probe, eps, 2, mode=mode)
    for n in (1, 2):
        np.testing.assert_allclose(b.terms[n - 1].values, 2 ** n * a.terms[n - 1].values, rtol=1e-10,
                                   atol=1e-12 * np.abs(b.terms[n - 1].values).max())


def test_periodic_chain_is_linear(rng):
    n = 8
    v = rng.normal(size=(n, n, n))
    u1, u2 = rng.normal(size=(2, n, n, n))
    k = 2 * math.pi * np.fft.fftfreq(n)
    kx, ky, kz = np.meshgrid(k, k, k, indexing='ij')
    k2 = kx ** 2 + ky ** 2 + kz ** 2
    a = oracles.periodic_chain(v, u1 + 3 * u2, k2, 0.7, 0.1, 2)
    b = oracles.periodic_chain(v, u1, k2, 0.7, 0.1, 2)
    c = oracles.periodic_chain(v, u2, k2, 0.7, 0.1, 2)
    for x, y, z in zip(a, b, c):
        np.testing.assert_allclose(x, y + 3 * z, atol=1e-10)


def test_frequency_rule_band(probe):
    rule = oracles.FrequencyRule.for_field(probe)
    assert rule.radii.max() <= math.pi / probe.spacing
    with pytest.raises(ResolutionError):
        oracles.FrequencyRule(np.array([10.0]), np.array([1.0]), 5.0)


def test_lattice_rule_covers_packet(probe):
    rule = oracles.FrequencyRule.lattice(probe)
    assert rule.kind == 'lattice' and len(rule) == len(rule.shells)
    np.testing.assert_allclose(rule.radii, 2 * math.pi / probe.box * np.sqrt(rule.shells))


def test_richardson_eps_removes_linear_bias(probe):
    out, ratio = oracles.richardson_eps(lambda e: probe.like(probe.values * (1 + 3 * e)), 0.1)
    np.testing.assert_allclose(out.values, probe.values, atol=1e-12)
    assert ratio == pytest.approx(2.0)


def test_duhamel_horizon_check(probe, weak_gaussian):
    with pytest.raises(ResolutionError):
        oracles.duhamel_time(weak_gaussian, probe, eps=0.1, t_max=10.0)
    with pytest.raises(ValueError):
        oracles.duhamel_time(weak_gaussian, probe, eps=0.0)


@pytest.mark.slow
@pytest.mark.oracle
def test_duhamel_matches_periodic_stationary(probe, weak_gaussian):
    eps = 0.2
    t = oracles.duhamel_time(weak_gaussian, probe, eps, check_box=False)
    s = oracles.ls_born_iterate(weak_gaussian, probe, eps, 1, mode='periodic').terms[0]
    assert np.linalg.norm(t.values - s.values) / np.linalg.norm(s.values) < 1e-2


def _probe_r(r):
    return np.exp(-0.5 * r ** 2)


def test_jost_identity_for_zero_potential():
    w, data = oracles.jost_wave_operator(zero_potential(), _probe_r)
    np.testing.assert_allclose(data.delta, 0.0, atol=1e-8)
    np.testing.assert_allclose(w.values[1:], _probe_r(w.r[1:]), atol=1e-5)  # r = 0 copies r = dr


@pytest.mark.oracle
def test_jost_isometry_and_wronskian(soliton):
    w, data = oracles.jost_wave_operator(soliton, _probe_r)
    f0 = oracles.RadialProfile(w.r, _probe_r(w.r).astype(np.complex128))
    assert w.norm() == pytest.approx(f0.norm(), rel=1e-3)
    assert data.wronskian_error < 1e-6


def test_bound_state_detection():
    deep = GaussianPotential(-10.0, 1.0)
    assert oracles.jost_zero_check(deep).bound_state
    assert not oracles.jost_zero_check(GaussianPotential(-0.1, 1.0)).bound_state
    with pytest.raises(BoundStateError):
        oracles.jost_wave_operator(deep, _probe_r)


def test_radial_born_terms_homogeneous(soliton):
    a = oracles.radial_born_terms(soliton, _probe_r, 2)
    b = oracles.radial_born_terms(soliton * 2.0, _probe_r, 2)
    np.testing.assert_allclose(b[0].values, 2 * a[0].values, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(b[1].values, 4 * a[1].values, rtol=1e-10, atol=1e-14)


def test_born_ratio_is_linear_in_coupling(soliton):
    assert oracles.born_ratio(soliton * 0.5) == pytest.approx(0.5 * oracles.born_ratio(soliton), rel=1e-8)


def test_critical_coupling():
    def family(g):
        return SolitonPotential(g, 1.0)

    g = oracles.critical_coupling(family, 0.5, xtol=1e-6)
    assert g == pytest.approx(0.5 / oracles.born_ratio(family(1.0)), rel=1e-4)


def test_born_ratio_needs_field_for_grid_potentials():
    from waveop.potentials import GridPotential
    V = GridPotential(gaussian_packet(16, 8.0))
    with pytest.raises(ValueError):
        oracles.born_ratio(V)


@pytest.mark.slow
@pytest.mark.oracle
def test_radial_series_remainder_is_cubic(soliton):
    V = soliton.scaled(0.1 / oracles.born_ratio(soliton))
    rest = []
    for c in (1.0, 2.0):
        W = V * c
        wj, _ = oracles.jost_wave_operator(W, _probe_r)
        f0 = oracles.RadialProfile(wj.r, _probe_r(wj.r).astype(np.complex128))
        w1, w2 = oracles.radial_born_terms(W, _probe_r, 2, r=wj.r)
        rest.append((wj - (f0 + w1 + w2)).norm())
    assert rest[1] / rest[0] == pytest.approx(8.0, rel=0.2)
