import numpy as np
import pytest

from waveop.utils.fields import Field3D, fourier_upsample, gaussian_packet
from waveop.utils.general import BoxError, ConfigError
from waveop.utils.io import load_array, load_config, save_array


def test_packet_is_normalized(probe):
    assert probe.norm() == pytest.approx(1.0)
    assert probe.n == 32 and probe.box == pytest.approx(24.0)


def test_field_shape_checks():
    with pytest.raises(ValueError):
        Field3D(np.zeros((4, 4, 5)), 1.0, np.zeros(3))
    with pytest.raises(ValueError):
        Field3D.centered(48)


def test_support_of_centered_packet(probe):
    center, radius = probe.support()
    np.testing.assert_allclose(center, 0.0, atol=probe.spacing)
    assert 4.0 < radius < 12.0


def test_support_touching_edge():
    f = Field3D.centered(16, 8.0, np.ones((16, 16, 16)))
    with pytest.raises(BoxError):
        f.support()
    assert Field3D.centered(16, 8.0).support() is None


def test_boundary_mass_of_constant_field():
    f = Field3D.centered(16, 8.0, np.ones((16, 16, 16)))
    assert f.boundary_mass(2) == pytest.approx(1 - (12 / 16) ** 3)
    with pytest.raises(BoxError):
        f.check_buffer(1e-3)


@pytest.mark.parametrize('method', ['trilinear', 'cubic'])
def test_sample_reproduces_nodes(probe, method):
    idx = np.array([[16, 16, 16], [10, 20, 17], [3, 30, 8]])
    pts = probe.origin + probe.spacing * idx
    np.testing.assert_allclose(probe.sample(pts, method), probe.values[tuple(idx.T)], atol=1e-12)


def test_sample_rejects_far_points(probe):
    with pytest.raises(BoxError):
        probe.sample(np.array([[100.0, 0.0, 0.0]]))


def test_fourier_upsample_keeps_nodes(probe):
    up = fourier_upsample(probe.values, 2)
    np.testing.assert_allclose(up[::2, ::2, ::2], probe.values, atol=1e-12)


def test_continuous_fourier_of_packet():
    f = gaussian_packet(32, 24.0, 1.0)
    F = f.fourier()
    # |f^(0)| = (2 pi)^{3/2} w^3 / ||g||, ||g|| = pi^{3/4} w^{3/2}
    assert abs(F[0, 0, 0]) == pytest.approx((2 * np.pi) ** 1.5 / np.pi ** 0.75, rel=1e-6)


def test_array_artifact(tmp_path, probe):
    save_array(tmp_path / 'f.bin', probe.values, {'spacing': probe.spacing})
    values, side = load_array(tmp_path / 'f.bin')
    assert side['dtype'] == 'complex128' and side['endianness'] == 'little'
    assert side['spacing'] == probe.spacing
    np.testing.assert_array_equal(values, probe.values)
    assert (tmp_path / 'f.bin').stat().st_size == 16 * probe.values.size


def test_config_defaults():
    cfg = load_config()
    assert cfg.potential['kind'] == 'gaussian'
    assert cfg.refined().resolution['grid_n'] == 2 * cfg.resolution['grid_n']
    assert cfg.refined().oracle['dt'] == cfg.oracle['dt'] / 2


def test_config_file(tmp_path):
    p = tmp_path / 'run.cfg'
    p.write_text('potential:\n  kind: soliton\n  coupling: 0.1\n  scale: 2.0\nresolution:\n  grid_n: 32\n')
    cfg = load_config(p, {'seed': 3})
    assert cfg.potential == {'kind': 'soliton', 'coupling': 0.1, 'scale': 2.0}
    assert cfg.resolution['grid_n'] == 32 and cfg.seed == 3


@pytest.mark.parametrize('text', ['resolution:\n  grid_n: 48\n', 'colour: blue\n',
                                  'potential:\n  kind: gaussian\n  amplitude: 1.0\n',
                                  'tolerances:\n  born_tol: -1\n', 'eps: []\n'])
def test_config_errors(tmp_path, text):
    p = tmp_path / 'bad.cfg'
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)
