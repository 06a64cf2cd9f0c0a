import json

import pytest

from waveop import acceptance, cli, norms, oracles
from waveop.config import config

SMALL = """potential:
  kind: gaussian
  amplitude: {amplitude}
  width: 1.0
resolution:
  dirs_order: 2
  grid_n: 16
  box_scale: 16.0
out: {out}
"""


def _cfg(tmp_path, amplitude=0.5):
    p = tmp_path / f'small_{amplitude}.cfg'
    p.write_text(SMALL.format(amplitude=amplitude, out=tmp_path / 'runs'))
    return str(p)


@pytest.fixture
def small_cfg(tmp_path):
    return _cfg(tmp_path)


@pytest.fixture
def failing_gate(monkeypatch):
    # norms far above c0 without computing them
    def report(V, *args, **kwargs):
        return norms.NormReport(b_norm=5.0, b_star_norm=float('nan'), dyadic_half=5.0, triple=1.0,
                                diagnostics=[{'normal': [0.0, 0.0, 1.0], 'b_norm': 5.0}])

    monkeypatch.setattr(norms, 'norm_report', report)
    monkeypatch.setattr(oracles, 'born_ratio', lambda V, *args, **kwargs: 0.2)


def test_parse_opt():
    opt = cli.parse_opt(['oracle', 'jost', 'a.cfg', '--eps', '0.1', '--refine', '1'])
    assert opt.command == 'oracle' and opt.action == 'jost' and opt.cfg == 'a.cfg'
    assert opt.eps == 0.1 and opt.refine == 1
    opt = cli.parse_opt(['lfun', '--workers', '2', 'a.cfg'])
    assert opt.action == 'compute' and opt.cfg == 'a.cfg' and opt.workers == 2
    assert cli.parse_opt(['structure', 'born-sum']).cfg == ''
    with pytest.raises(SystemExit):
        cli.parse_opt(['train'])
    with pytest.raises(SystemExit):
        cli.parse_opt(['structure', 'apply', 'a.cfg', 'b.cfg'])


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / 'bad.cfg'
    bad.write_text('potential: [unclosed\n')
    assert cli.main(['lfun', str(bad), '--quiet']) == config.EXIT_CONFIG
    assert cli.main(['lfun', str(tmp_path / 'missing.cfg'), '--quiet']) == config.EXIT_CONFIG


def test_unknown_potential_exit_code(tmp_path):
    p = tmp_path / 'odd.cfg'
    p.write_text(f'potential:\n  kind: coulomb\nout: {tmp_path}\n')
    assert cli.main(['lfun', str(p), '--quiet']) == config.EXIT_CONFIG


def test_lfun_command(small_cfg, tmp_path):
    assert cli.main(['lfun', small_cfg, '--workers', '1', '--quiet']) == config.EXIT_OK
    out = tmp_path / 'runs' / 'lfun'
    summary = json.loads((out / 'lfun.json').read_text())
    assert summary['triple_norm'] > 0
    assert (out / 'L.bin').exists() and (out / 'config.json').exists()
    assert cli.main(['lfun', 'compute', small_cfg, '--workers', '1', '--quiet']) == config.EXIT_OK
    assert (tmp_path / 'runs' / 'lfun2' / 'lfun.json').exists()


def test_lfun_norms_command(small_cfg, tmp_path):
    assert cli.main(['lfun', 'norms', small_cfg, '--workers', '1', '--quiet']) == config.EXIT_OK
    summary = json.loads((tmp_path / 'runs' / 'lfun' / 'lfun_norms.json').read_text())
    assert summary['triple_norm'] > 0 and summary['error_bar'] >= 0
    assert [d['alpha'] for d in summary['dyadic']] == [0.5, 1.0]


def test_norms_gate_failure(small_cfg, tmp_path, failing_gate):
    assert cli.main(['norms', 'report', small_cfg, '--quiet']) == config.EXIT_GATE
    out = tmp_path / 'runs' / 'norms'
    assert json.loads((out / 'norms.json').read_text())['gate']['passed'] is False
    assert (out / 'scales.csv').read_text().splitlines()[0] == 'k,shell_radius,shell_l2,b_half_term'
    assert (out / 'normals.csv').exists()


def test_structure_exit_codes(small_cfg, failing_gate):
    assert cli.main(['structure', small_cfg, '--order', '3', '--quiet']) == config.EXIT_CONFIG
    assert cli.main(['structure', 'g2', small_cfg, '--quiet']) == config.EXIT_GATE
    assert cli.main(['structure', 'born-sum', small_cfg, '--quiet']) == config.EXIT_GATE


def test_structure_apply(small_cfg, tmp_path):
    assert cli.main(['structure', 'apply', small_cfg, '--workers', '1', '--quiet']) == config.EXIT_OK
    out = tmp_path / 'runs' / 'structure'
    summary = json.loads((out / 'structure.json').read_text())
    assert summary['order'] == 1 and summary['norm_wf'] > 0
    assert (out / 'g1' / 'measure.json').exists()
    side = json.loads((out / 'W1f.bin.json').read_text())
    assert side['shape'] == [16, 16, 16] and side['box'] == 16.0


def test_kernels_gate_failure(small_cfg, failing_gate):
    assert cli.main(['kernels', 'verify', small_cfg, '--quiet']) == config.EXIT_GATE


def test_oracle_exit_codes(small_cfg, tmp_path):
    # eps below the torus lattice spacing of |xi|^2
    assert cli.main(['oracle', 'periodic', small_cfg, '--eps', '1e-4', '--quiet']) == config.EXIT_RESOLUTION
    assert cli.main(['oracle', 'duhamel', small_cfg, '--eps', '0', '--quiet']) == config.EXIT_CONFIG
    assert cli.main(['oracle', 'jost', _cfg(tmp_path, -10.0), '--quiet']) == config.EXIT_GATE


def test_verify_all_exit_codes(small_cfg, tmp_path, monkeypatch):
    monkeypatch.setattr(acceptance, 'CRITERIA', [(1, 'passes', lambda cfg: (0.0, 1.0, {}))])
    assert cli.main(['verify-all', small_cfg, '--quiet']) == config.EXIT_OK
    monkeypatch.setattr(acceptance, 'CRITERIA', [(1, 'passes', lambda cfg: (0.0, 1.0, {})),
                                                 (2, 'fails', lambda cfg: (2.0, 1.0, {}))])
    assert cli.main(['verify-all', small_cfg, '--quiet']) == config.EXIT_RESOLUTION
    matrix = json.loads((tmp_path / 'runs' / 'verify_all2' / 'acceptance.json').read_text())
    assert matrix['passed'] is False
    assert [c['passed'] for c in matrix['criteria']] == [True, False]
