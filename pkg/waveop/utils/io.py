"""Artifact and config I/O.

Binary artifacts are raw little-endian float64 arrays (complex data stored
as interleaved real/imag pairs) with a JSON sidecar named <file>.json that
records shape, dtype, endianness and any metadata.
"""

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from waveop.config import config
from waveop.utils.general import ConfigError, check_file, is_pow2

logger = logging.getLogger(__name__)


def save_array(path, array, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    a = np.asarray(array)
    is_complex = np.iscomplexobj(a)
    raw = a.astype(np.complex128).view(np.float64) if is_complex else a.astype(np.float64)
    raw.astype('<f8').tofile(path)
    side = {'shape': list(a.shape), 'dtype': 'complex128' if is_complex else 'float64',
            'endianness': 'little', 'layout': 'C'}
    side.update(meta or {})
    write_json(path.with_suffix(path.suffix + '.json'), side)
    return path


def load_array(path):
    path = Path(path)
    side = read_json(path.with_suffix(path.suffix + '.json'))
    raw = np.fromfile(path, dtype='<f8')
    if side['dtype'] == 'complex128':
        raw = raw.view(np.complex128)
    return raw.reshape(side['shape']), side


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_default)
    return path


def read_json(path):
    with open(path) as f:
        return json.load(f)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return {'re': o.real, 'im': o.imag}
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f'{type(o)} is not JSON serializable')


DEFAULTS = {
    'potential': {'kind': 'gaussian', 'amplitude': 1.0, 'width': 1.0},
    'resolution': {
        'grid_n': config.GRID_N,
        'box_scale': config.BOX_SCALE,
        'dirs_rule': 'gauss_product',
        'dirs_order': config.DIRS_ORDER,
        'normals_order': config.NORMALS_ORDER,
        'r_max_scale': config.R_MAX_SCALE,
        'r_step_scale': config.R_STEP_SCALE,
        'tau_points': config.TAU_POINTS,
        's_points': config.S_POINTS,
        'slice_grid': config.SLICE_GRID,
        'freq_radial_nodes': config.FREQ_RADIAL_NODES,
        'freq_angular_order': config.FREQ_ANGULAR_ORDER,
        'k_points': config.K_POINTS,
        'yprime_n': config.YPRIME_N,
    },
    'eps': list(config.EPS_SCHEDULE),
    'tolerances': {'l_tol': config.L_TOL, 'born_tol': config.BORN_TOL, 'buffer_mass': config.BUFFER_MASS_TOL},
    'gate': {'c0': config.C0},
    'probe': {'width': 1.0, 'center': [0.0, 0.0, 0.0], 'k0': [0.0, 0.0, 1.0]},
    'oracle': {'t_max': config.DUHAMEL_T_MAX, 'dt': config.DUHAMEL_DT, 'born_n_max': config.BORN_N_MAX},
    'kernels': {'samples': config.KERNEL_SAMPLES, 'quad_n': config.KERNEL_QUAD_N, 'order': 2},
    'seed': config.SEED,
    'workers': config.WORKERS,
    'out': config.OUT_DIR,
    'cache': None,
}

POTENTIAL_PARAMS = {
    'gaussian': {'amplitude': float, 'width': float},
    'soliton': {'coupling': float, 'scale': float},
    'radial_table': {'table': str},
    'grid': {'samples': str},
}

POW2_KEYS = ('grid_n', 'slice_grid')
POSITIVE_KEYS = ('box_scale', 'r_max_scale', 'r_step_scale', 'tau_points', 's_points', 'dirs_order',
                 'normals_order', 'freq_radial_nodes', 'freq_angular_order', 'k_points', 'yprime_n')


@dataclass
class RunConfig:
    potential: dict
    resolution: dict
    eps: list
    tolerances: dict
    gate: dict
    probe: dict
    oracle: dict
    kernels: dict
    seed: int = 0
    workers: int = config.WORKERS
    out: str = config.OUT_DIR
    cache: str = None
    source: str = ''
    extra: dict = field(default_factory=dict)

    def refined(self, times=1):
        """Copy with every resolution knob doubled `times` times (steps halved)."""
        c = copy.deepcopy(self)
        for _ in range(times):
            r = c.resolution
            for k in ('grid_n', 'slice_grid', 'tau_points', 'k_points'):
                r[k] *= 2
            for k in ('dirs_order', 'normals_order', 'freq_radial_nodes', 'freq_angular_order', 'yprime_n'):
                r[k] *= 2
            r['s_points'] = 2 * r['s_points'] - 1
            r['r_step_scale'] /= 2
            c.oracle['dt'] /= 2
        return c

    def as_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in
                ('potential', 'resolution', 'eps', 'tolerances', 'gate', 'probe', 'oracle', 'kernels', 'seed')}


def _merge(base, over, path, problems):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            problems.append(f'{path}{k}: unknown key')
        elif isinstance(base[k], dict) and k != 'potential':
            if not isinstance(v, dict):
                problems.append(f'{path}{k}: expected a mapping')
            else:
                out[k] = _merge(base[k], v, f'{path}{k}.', problems)
        else:
            out[k] = v
    return out


def validate(d):
    """Return the list of schema problems (empty when valid)."""
    problems = []
    pot = d.get('potential')
    if not isinstance(pot, dict):
        problems.append('potential: expected a mapping')
        pot = {}
    kind = pot.get('kind')
    if kind not in POTENTIAL_PARAMS:
        problems.append(f'potential.kind: must be one of {sorted(POTENTIAL_PARAMS)}, got {kind!r}')
    else:
        for k, t in POTENTIAL_PARAMS[kind].items():
            if k not in pot:
                problems.append(f'potential.{k}: required for kind {kind}')
            elif t is float and (not isinstance(pot[k], (int, float)) or isinstance(pot[k], bool)):
                problems.append(f'potential.{k}: expected a number')
        for k in pot:
            if k not in POTENTIAL_PARAMS[kind] and k != 'kind':
                problems.append(f'potential.{k}: unknown key for kind {kind}')
        if kind == 'soliton' and isinstance(pot.get('scale'), (int, float)) and pot['scale'] <= 0:
            problems.append('potential.scale: must be positive')
        if kind == 'gaussian' and isinstance(pot.get('width'), (int, float)) and pot['width'] <= 0:
            problems.append('potential.width: must be positive')

    res = d['resolution']
    for k in POW2_KEYS:
        if not isinstance(res[k], int) or not is_pow2(res[k]):
            problems.append(f'resolution.{k}: must be a power of two, got {res[k]!r}')
    for k in POSITIVE_KEYS:
        if not isinstance(res[k], (int, float)) or res[k] <= 0:
            problems.append(f'resolution.{k}: must be positive, got {res[k]!r}')
    if res['dirs_rule'] not in ('gauss_product', 'lebedev'):
        problems.append(f"resolution.dirs_rule: unknown rule {res['dirs_rule']!r}")
    eps = d['eps']
    if not isinstance(eps, list) or not eps or any(not isinstance(e, (int, float)) or e < 0 for e in eps):
        problems.append('eps: must be a non-empty list of nonnegative numbers')
    for k, v in d['tolerances'].items():
        if not isinstance(v, (int, float)) or v <= 0:
            problems.append(f'tolerances.{k}: must be positive, got {v!r}')
    if not isinstance(d['gate']['c0'], (int, float)) or d['gate']['c0'] <= 0:
        problems.append('gate.c0: must be positive')
    if not isinstance(d['seed'], int):
        problems.append('seed: must be an integer')
    if not isinstance(d['workers'], int) or d['workers'] < 1:
        problems.append('workers: must be a positive integer')
    return problems


def load_config(path=None, overrides=None):
    """Load a YAML key-value config, merge with defaults, validate; raises ConfigError listing every problem."""
    data = {}
    if path:
        path = check_file(str(path))
        try:
            with open(path) as f:
                data = yaml.load(f, Loader=yaml.SafeLoader) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f'{path}: not valid YAML: {e}') from e
        if not isinstance(data, dict):
            raise ConfigError(f'{path}: top level must be a mapping')
    problems = []
    merged = _merge(DEFAULTS, data, '', problems)
    if 'potential' in data:
        merged['potential'] = data['potential']
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[k] = v
    problems += validate(merged)
    if problems:
        for p in problems:
            logger.error(f'config: {p}')
        raise ConfigError('config invalid:\n  ' + '\n  '.join(problems), suggestion='fix the listed keys')
    return RunConfig(source=str(path or ''), **merged)
