# waveop general utils

import glob
import hashlib
import json
import logging
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from waveop.config import config
from waveop.utils.torch_utils import init_torch_seeds

np.set_printoptions(linewidth=320, formatter={'float_kind': '{:11.5g}'.format})  # format short g, %precision=5
os.environ['NUMEXPR_MAX_THREADS'] = str(min(os.cpu_count() or 1, 8))  # NumExpr max threads

logger = logging.getLogger(__name__)


class WaveopError(Exception):
    """Base error; carries the CLI exit code, the violated tolerance and a refinement hint."""

    exit_code = config.EXIT_RESOLUTION

    def __init__(self, message, tolerance=None, suggestion=''):
        super().__init__(message)
        self.tolerance = tolerance
        self.suggestion = suggestion

    def __str__(self):
        s = super().__str__()
        if self.tolerance is not None:
            s += f' (tolerance {self.tolerance:g})'
        if self.suggestion:
            s += f'; try: {self.suggestion}'
        return s


class ConfigError(WaveopError):
    exit_code = config.EXIT_CONFIG


class ResolutionError(WaveopError):
    pass


class AccuracyError(WaveopError):
    def __init__(self, message, residual=None, **kwargs):
        super().__init__(message, **kwargs)
        self.residual = residual


class WindowError(WaveopError):
    pass


class BoxError(WaveopError):
    pass


class SingularPointError(WaveopError):
    pass


class DomainError(WaveopError):
    pass


class GateError(WaveopError):
    exit_code = config.EXIT_GATE


class DivergenceError(WaveopError):
    exit_code = config.EXIT_GATE


class BoundStateError(WaveopError):
    exit_code = config.EXIT_GATE


def set_logging(verbose=True):
    logging.basicConfig(
        format="%(message)s",
        level=logging.INFO if verbose else logging.WARN)


def init_seeds(seed=0):
    # Initialize random number generator (RNG) seeds
    random.seed(seed)
    np.random.seed(seed)
    init_torch_seeds(seed)


def check_file(file):
    # Search for file if not found
    if Path(file).is_file() or file == '':
        return file
    files = glob.glob('./**/' + file, recursive=True)  # find file
    if not files:
        raise ConfigError(f'File Not Found: {file}')
    if len(files) > 1:
        raise ConfigError(f"Multiple files match '{file}', specify exact path: {files}")
    return files[0]


def is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


def next_pow2(x):
    # smallest power of two >= x
    return 1 << max(0, math.ceil(math.log2(max(x, 1))))


def colorstr(*input):
    # Colors a string https://en.wikipedia.org/wiki/ANSI_escape_code, i.e.  colorstr('blue', 'hello world')
    *args, string = input if len(input) > 1 else ('blue', 'bold', input[0])  # color arguments, string
    colors = {'black': '\033[30m',  # basic colors
              'red': '\033[31m',
              'green': '\033[32m',
              'yellow': '\033[33m',
              'blue': '\033[34m',
              'magenta': '\033[35m',
              'cyan': '\033[36m',
              'white': '\033[37m',
              'bright_red': '\033[91m',
              'bright_green': '\033[92m',
              'end': '\033[0m',  # misc
              'bold': '\033[1m',
              'underline': '\033[4m'}
    return ''.join(colors[x] for x in args) + f'{string}' + colors['end']


def parallel_map(fn, items, workers=None):
    """Map fn over items with a thread pool; results come back in submission order."""
    items = list(items)
    workers = workers or config.WORKERS
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def stable_hash(obj):
    # sha1 of the canonical JSON form, used as cache key
    blob = json.dumps(obj, sort_keys=True, default=_json_default).encode()
    return hashlib.sha1(blob).hexdigest()[:16]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return hashlib.sha1(np.ascontiguousarray(o).tobytes()).hexdigest()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f'not serializable: {type(o)}')


def increment_path(path, exist_ok=True, sep=''):
    # Increment path, i.e. runs/exp --> runs/exp{sep}2, runs/exp{sep}3 etc.
    path = Path(path)  # os-agnostic
    if (path.exists() and exist_ok) or (not path.exists()):
        return str(path)
    dirs = glob.glob(f"{path}{sep}*")  # similar paths
    i = []
    for d in dirs:
        tail = d[len(str(path)) + len(sep):]
        if tail.isdigit():
            i.append(int(tail))
    n = max(i) + 1 if i else 2  # increment number
    return f"{path}{sep}{n}"


def rel_l2(a, b):
    # relative L2 distance |a-b|/|b|, 0 when both vanish
    nb = np.linalg.norm(np.ravel(b))
    na = np.linalg.norm(np.ravel(a) - np.ravel(b))
    if nb == 0:
        return 0.0 if na == 0 else math.inf
    return float(na / nb)
