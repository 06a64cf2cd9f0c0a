import pytest

from waveop import acceptance
from waveop.utils.general import AccuracyError
from waveop.utils.io import load_config


def test_matrix_lists_every_criterion():
    assert [i for i, _, _ in acceptance.CRITERIA] == list(range(1, 12))


def test_failing_criterion_is_recorded():
    def broken(cfg):
        raise AccuracyError('did not converge', residual=0.5, tolerance=0.1)

    row = acceptance.run_criterion(99, 'broken', broken, load_config())
    assert not row.passed and 'did not converge' in row.error
    d = acceptance.matrix_dict([row, acceptance.Criterion(1, 'ok', True, 0.0, 1.0)])
    assert d['passed'] is False and len(d['criteria']) == 2


def test_threshold_is_inclusive():
    row = acceptance.run_criterion(1, 'edge', lambda cfg: (1.0, 1.0, {}), load_config())
    assert row.passed and row.value == 1.0


def test_g1_criterion():
    cfg = load_config()
    cfg.resolution['dirs_order'] = 2
    value, tol, details = acceptance.g1_total_variation(cfg)
    assert value <= tol
    assert details['tv'] == pytest.approx(details['triple'])


def test_refinement_must_shrink():
    assert acceptance._shrinks(1e-2, 5e-3)
    assert not acceptance._shrinks(5e-3, 1e-2)
    assert not acceptance._shrinks(5e-3, 5e-3)
    # both already at the floor
    assert acceptance._shrinks(5e-4, 6e-4)


@pytest.mark.slow
@pytest.mark.oracle
def test_cross_oracle_reports_three_pairs():
    cfg = load_config()
    cfg.potential = {'kind': 'gaussian', 'amplitude': 0.1, 'width': 1.0}
    cfg.resolution.update(grid_n=32, box_scale=16.0, dirs_order=4)
    value, tol, details = acceptance.cross_oracle(cfg)
    pairs = {'structure_vs_stationary', 'stationary_vs_time', 'periodic_vs_time'}
    assert set(details['base']) == pairs and set(details['refined']) == pairs
    # same torus, same eps: only the time step separates them
    assert details['refined']['periodic_vs_time'] < 1e-2
    assert details['shrinks']['periodic_vs_time']
    assert value == (0.0 if details['worst_refined'] <= 2e-2 and all(details['shrinks'].values()) else 1.0)
