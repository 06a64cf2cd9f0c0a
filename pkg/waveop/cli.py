"""waveop command line.

    waveop lfun configs/gaussian.cfg
    waveop lfun norms configs/gaussian.cfg --tol 1e-8
    waveop norms report configs/gaussian.cfg --workers 8
    waveop structure g2 configs/soliton_small.cfg
    waveop structure apply configs/soliton_small.cfg --order 1
    waveop structure born-sum configs/soliton_small.cfg
    waveop kernels verify configs/soliton_small.cfg --samples 20
    waveop oracle duhamel configs/cross_oracle.cfg
    waveop verify-all configs/soliton_small.cfg
    waveop report configs/gaussian.cfg

The action word after the command is optional; the first one listed in ACTIONS is the default.
Exit codes: 0 ok, 2 gate failure, 3 resolution/accuracy error, 4 config error.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from waveop import acceptance, kernels, lfun, norms, oracles, structure
from waveop.config import config
from waveop.potentials import from_descriptor, rescale
from waveop.utils.fields import gaussian_packet
from waveop.utils.general import (ConfigError, GateError, WaveopError, colorstr, increment_path, init_seeds, rel_l2,
                                  set_logging)
from waveop.utils.io import load_config, save_array, write_json
from waveop.utils.plots import plot_born_decay, plot_L_profile, plot_scale_diagnostics, write_csv
from waveop.utils.quadrature import DirectionSet
from waveop.utils.torch_utils import time_synchronized

logger = logging.getLogger(__name__)


def _dirs(cfg):
    r = cfg.resolution
    return DirectionSet.build(r['dirs_rule'], r['dirs_order'])


def _l_kwargs(cfg):
    r = cfg.resolution
    return {'r_max_scale': r['r_max_scale'], 'r_step_scale': r['r_step_scale'], 'tau_points': r['tau_points'],
            'tau_max': cfg.extra.get('tau_max'), 'tol': cfg.tolerances['l_tol'], 'workers': cfg.workers}


def _gate(cfg, V, rep=None):
    rep = rep or norms.norm_report(V, _dirs(cfg), with_b_star=False, workers=cfg.workers)
    ratio = oracles.born_ratio(V) if V.radial else None
    return norms.smallness_gate(rep, cfg.gate['c0'], ratio)


def _passed_gate(cfg, V):
    gate = _gate(cfg, V)
    if not gate.passed:
        raise GateError(f'smallness gate failed: {gate.reason}', suggestion='lower the coupling')
    return gate


def _eps(cfg, opt):
    return opt.eps if opt.eps is not None else max(cfg.eps)


def _probe(cfg):
    p, r = cfg.probe, cfg.resolution
    return gaussian_packet(r['grid_n'], r['box_scale'], p['width'], p['center'], p.get('k0', (0.0, 0.0, 0.0)))


def save_field(path, f, meta=None):
    # Field3D binary: values plus the grid geometry in the sidecar
    side = {'spacing': f.spacing, 'origin': f.origin, 'box': f.box}
    side.update(meta or {})
    return save_array(path, f.values, side)


def cmd_lfun(cfg, opt, out):
    V = from_descriptor(cfg.potential)
    dirs = _dirs(cfg)
    L = lfun.cached_L(V, dirs, cfg.cache, **_l_kwargs(cfg))
    if opt.action == 'compute':
        L.save(out / 'L.bin')
        summary = {'triple_norm': lfun.triple_norm(L), 'tail_bound': L.tail_bound,
                   'plancherel': lfun.plancherel_check(V, L=L), 'provenance': L.provenance}
        write_json(out / 'lfun.json', summary)
        logger.info(f"|||V||| = {summary['triple_norm']:.8g}")
        return summary

    triple, err = lfun.richardson_triple_norm(V, dirs, **_l_kwargs(cfg))
    bounds = []
    for alpha in (0.5, 1.0):
        rep = lfun.dyadic_L_bound(V, alpha, L=L)
        bounds.append({'alpha': alpha, 'lhs': rep.lhs, 'rhs': rep.rhs, 'ratio': rep.ratio,
                       'boundary_share': rep.boundary_share})
    summary = {'triple_norm': triple, 'error_bar': err, 'plancherel': lfun.plancherel_check(V, L=L),
               'dyadic': bounds}
    write_json(out / 'lfun_norms.json', summary)
    logger.info(f'|||V||| = {triple:.8g} ± {err:.2g}')
    return summary


def cmd_norms(cfg, opt, out):
    V = from_descriptor(cfg.potential)
    r = cfg.resolution
    normals = norms.plane_normals(r['normals_order'])
    rep = norms.norm_report(V, _dirs(cfg), normals, cfg.gate['c0'], r['s_points'], workers=cfg.workers)
    gate = _gate(cfg, V, rep)
    rep.born_ratio = gate.born_ratio
    d = rep.as_dict()
    d['gate'] = {'passed': gate.passed, 'margin': gate.margin, 'reason': gate.reason}
    write_json(out / 'norms.json', d)

    ks, l2, terms = norms.dyadic_terms(V, 0.5)
    write_csv(out / 'scales.csv', {'k': ks, 'shell_radius': 2.0 ** ks, 'shell_l2': l2, 'b_half_term': terms})
    if rep.diagnostics:
        n = np.array([row['normal'] for row in rep.diagnostics])
        write_csv(out / 'normals.csv', {'nx': n[:, 0], 'ny': n[:, 1], 'nz': n[:, 2],
                                        'b_norm': [row['b_norm'] for row in rep.diagnostics]})
    if not gate.passed:
        raise GateError(f'smallness gate failed: {gate.reason}', suggestion='lower the coupling')
    return d


def _measure(cfg, V, order):
    if order == 1:
        return structure.build_g1(lfun.cached_L(V, _dirs(cfg), cfg.cache, **_l_kwargs(cfg)))
    return structure.build_g2(V, _dirs(cfg), gate=_gate(cfg, V), workers=cfg.workers,
                              yprime_n=cfg.resolution['yprime_n'])


def _born_sum(cfg, opt, V, out):
    """f + sum_n W_n f; at eps = 0 the first order goes through the structure path."""
    eps = _eps(cfg, opt)
    n_max = opt.order or cfg.oracle['born_n_max']
    gate = _passed_gate(cfg, V)
    f = _probe(cfg)
    g1 = _measure(cfg, V, 1) if eps == 0 else None
    res = structure.born_sum(V, f, eps, n_max, cfg.tolerances['born_tol'], g1=g1, gate=gate, workers=cfg.workers)
    save_field(out / 'born_sum.bin', res.field, {'eps': eps, 'orders': len(res.norms)})
    plot_born_decay(res.norms, out, res.ratio)
    d = {'eps': eps, 'norms': res.norms, 'ratio': res.ratio, 'isometry': res.field.norm() / f.norm(),
         'structure_order1': g1 is not None, 'gate_margin': gate.margin}
    write_json(out / 'born_sum.json', d)
    return d


def cmd_structure(cfg, opt, out):
    if opt.action == 'g2':
        order = 2
    elif opt.action == 'build':
        order = opt.order or cfg.kernels['order']
    else:
        order = opt.order or 1
    if opt.action != 'born-sum' and order not in (1, 2):
        raise ConfigError(f'structure measures are built for order 1 or 2, got {order}',
                          suggestion='higher orders come from structure born-sum')
    V = from_descriptor(cfg.potential)
    if opt.action == 'born-sum':
        return _born_sum(cfg, opt, V, out)

    g = _measure(cfg, V, order)
    g.save(out / f'g{order}')
    summary = {'order': order, 'total_variation': g.total_variation,
               'scaled_total_variation': g.scaled_total_variation, 'components': len(g.components)}
    if order == 1:
        summary['triple_norm'] = lfun.triple_norm(g.components[0].profile)
    if opt.action == 'apply':
        f = _probe(cfg)
        w = structure.apply_structure(g, f, workers=cfg.workers)
        save_field(out / 'f.bin', f)
        save_field(out / f'W{order}f.bin', w, {'order': order, 'eps': g.eps})
        summary.update(norm_f=f.norm(), norm_wf=w.norm())
    write_json(out / 'structure.json', summary)
    return summary


def cmd_kernels(cfg, opt, out):
    V = from_descriptor(cfg.potential)
    gate = _passed_gate(cfg, V)
    eps = _eps(cfg, opt)
    samples = kernels.kernel_samples(V, opt.samples or cfg.kernels['samples'], cfg.seed)
    box = kernels.QuadratureBox.for_potential(V, cfg.kernels['quad_n'])
    t1 = kernels.TKernelSampler(V, eps, 1)
    rows = []
    for x0, x2, eta in samples:
        a = kernels.compose(t1, t1, x0, x2, eta, box)
        b = kernels.direct_chain_t2(V, eps, x0, x2, eta)
        rows.append({'x0': x0, 'x2': x2, 'eta': eta, 'composed': a, 'direct': b, 'rel_error': abs(a - b) / abs(b)})
    rep = kernels.resolvent_identity_check(V, eps, samples[:5], n_max=opt.order or config.NEUMANN_N, box=box,
                                           gate=gate)
    d = {'eps': eps, 'samples': rows, 'max_rel_error': max(r['rel_error'] for r in rows),
         'resolvent': {'ratios': rep.ratios, 'decaying': rep.decaying, 'residuals': rep.residuals}}
    write_json(out / 'kernels.json', d)
    return d


def cmd_oracle(cfg, opt, out):
    V = from_descriptor(cfg.potential)
    p = cfg.probe
    eps = _eps(cfg, opt)
    if opt.action == 'jost':
        def probe(r):
            return np.exp(-0.5 * (r / p['width']) ** 2)

        w, data = oracles.jost_wave_operator(V, probe, f_scale=p['width'])
        f0 = oracles.RadialProfile(w.r, probe(w.r).astype(np.complex128))
        save_array(out / 'jost_profile.bin', np.stack([w.r, w.values]), {'columns': ['r', 'W+f']})
        d = {'method': 'jost', 'isometry_error': abs(w.norm() / f0.norm() - 1),
             'wronskian_error': data.wronskian_error, 'phase_sign': config.JOST_PHASE_SIGN}
        write_json(out / 'oracle.json', d)
        return d

    f = _probe(cfg)
    if opt.action == 'duhamel':
        if eps <= 0:
            raise ConfigError(f'the time-domain oracle needs eps > 0, got {eps}', suggestion='pass --eps')
        w = oracles.duhamel_time(V, f, eps, cfg.oracle['t_max'], cfg.oracle['dt'], workers=cfg.workers)
        save_field(out / 'W1.bin', w, {'eps': eps})
        d = {'method': 'duhamel', 'eps': eps, 'norm': w.norm()}
    else:
        mode = 'periodic' if opt.action == 'periodic' else 'free'
        n = opt.order or cfg.oracle['born_n_max']
        terms = oracles.ls_born_iterate(V, f, eps, n, mode=mode, tol=cfg.tolerances['born_tol'], workers=cfg.workers)
        for j, t in enumerate(terms.terms, 1):
            save_field(out / f'W{j}.bin', t, {'order': j, 'eps': eps})
        d = {'method': f'ls-{mode}', 'eps': eps, 'norms': terms.norms, 'ratio': terms.ratio}
        if mode == 'free' and eps == 0:
            g1 = _measure(cfg, V, 1)
            d['structure_rel_l2'] = rel_l2(structure.apply_structure(g1, f, workers=cfg.workers).values,
                                           terms.terms[0].values)
    write_json(out / 'oracle.json', d)
    return d


def cmd_verify_all(cfg, opt, out):
    only = [int(s) for s in opt.only.split(',')] if opt.only else None
    rows = acceptance.run_acceptance(cfg, only)
    d = acceptance.matrix_dict(rows)
    write_json(out / 'acceptance.json', d)
    if not d['passed']:
        failed = [r.index for r in rows if not r.passed]
        raise WaveopError(f'acceptance criteria failed: {failed}', suggestion='rerun with --refine')
    return d


def cmd_report(cfg, opt, out):
    V = from_descriptor(cfg.potential)
    L = lfun.cached_L(V, _dirs(cfg), cfg.cache, **_l_kwargs(cfg))
    plot_L_profile(L, out)
    lams = [0.5, 1.0, 2.0, 4.0]
    reps = [norms.norm_report(rescale(V, lam), _dirs(cfg), with_b_star=False, workers=cfg.workers) for lam in lams]
    plot_scale_diagnostics(lams, {k: [getattr(rp, k) for rp in reps] for k in ('triple', 'b_norm', 'dyadic_half')},
                           out)
    if V.radial:
        terms = oracles.radial_born_terms(V, lambda r: np.exp(-0.5 * r ** 2), 5, f_scale=V.length_scale)
        nrm = [t.norm() for t in terms]
        plot_born_decay(nrm, out, structure.fit_ratio(nrm))
    return {'out': str(out)}


COMMANDS = {'lfun': cmd_lfun, 'norms': cmd_norms, 'structure': cmd_structure, 'kernels': cmd_kernels,
            'oracle': cmd_oracle, 'verify-all': cmd_verify_all, 'report': cmd_report}
ACTIONS = {'lfun': ('compute', 'norms'), 'norms': ('report',), 'structure': ('build', 'g2', 'apply', 'born-sum'),
           'kernels': ('verify',), 'oracle': ('ls', 'periodic', 'duhamel', 'jost'), 'verify-all': ('run',),
           'report': ('plots',)}


def parse_opt(argv=None):
    parser = argparse.ArgumentParser(prog='waveop', description='structure formulas for the wave operator W+')
    parser.add_argument('command', choices=list(COMMANDS), help='subcommand')
    parser.add_argument('args', nargs='*', metavar='[action] [cfg]', help='optional action, then the config file')
    parser.add_argument('--config', default='', help='config file path')
    parser.add_argument('--workers', type=int, default=None, help='worker threads')
    parser.add_argument('--out', default=None, help='output root')
    parser.add_argument('--cache', default=None, help='cache directory (default $WAVEOP_CACHE)')
    parser.add_argument('--seed', type=int, default=None, help='random seed')
    parser.add_argument('--refine', type=int, default=0, help='double every resolution knob this many times')
    parser.add_argument('--tol', type=float, default=None, help='ray transform tolerance')
    parser.add_argument('--tau-max', type=float, default=None, help='frequency cap for the ray transform')
    parser.add_argument('--dirs-order', type=int, default=None, help='direction rule order')
    parser.add_argument('--samples', type=int, default=None, help='kernel sample points')
    parser.add_argument('--eps', type=float, default=None, help='resolvent regularization')
    parser.add_argument('--order', type=int, default=None, help='Born / structure order')
    parser.add_argument('--only', default='', help='comma separated acceptance criteria, e.g. 1,3')
    parser.add_argument('--quiet', action='store_true', help='warnings only')
    opt = parser.parse_intermixed_args(argv)

    args, actions = list(opt.args), ACTIONS[opt.command]
    opt.action = args.pop(0) if args and args[0] in actions else actions[0]
    opt.cfg = args.pop(0) if args else ''
    if args:
        parser.error(f'unexpected arguments {args}; actions for {opt.command}: {", ".join(actions)}')
    return opt


def build_config(opt):
    overrides = {'workers': opt.workers, 'out': opt.out, 'seed': opt.seed,
                 'cache': opt.cache or os.environ.get(config.CACHE_ENV)}
    cfg = load_config(opt.config or opt.cfg, overrides)
    if opt.dirs_order:
        cfg.resolution['dirs_order'] = opt.dirs_order
    if opt.tau_max:
        cfg.extra['tau_max'] = opt.tau_max
    if opt.tol:
        cfg.tolerances['l_tol'] = opt.tol
    return cfg.refined(opt.refine) if opt.refine else cfg


def run(opt):
    cfg = build_config(opt)
    init_seeds(cfg.seed)
    out = Path(increment_path(Path(cfg.out) / opt.command.replace('-', '_'), exist_ok=False))
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / 'config.json', dict(cfg.as_dict(), command=opt.command, action=opt.action))
    logger.info(colorstr(f'waveop {opt.command} {opt.action}: ') + f'{cfg.source or "defaults"} -> {out}')
    t0 = time_synchronized()
    COMMANDS[opt.command](cfg, opt, out)
    logger.info(f'done ({time_synchronized() - t0:.1f}s)')
    return config.EXIT_OK


def main(argv=None):
    opt = parse_opt(argv)
    set_logging(not opt.quiet)
    try:
        return run(opt)
    except WaveopError as e:
        logger.error(colorstr('red', f'{type(e).__name__}: ') + str(e))
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
