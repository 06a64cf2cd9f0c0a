"""Complex fields on uniform periodic cubic grids."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from waveop.config import config
from waveop.utils.general import BoxError, ResolutionError, is_pow2
from waveop.utils.torch_utils import periodic_trilinear

logger = logging.getLogger(__name__)


@dataclass
class Field3D:
    """Samples f[i, j, k] = f(origin + h * (i, j, k)) on an n^3 periodic box of side n*h."""

    values: np.ndarray
    spacing: float
    origin: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.values.ndim != 3 or len(set(self.values.shape)) != 1:
            raise ValueError(f'Field3D needs a cubic grid, got shape {self.values.shape}')
        if self.spacing <= 0:
            raise ValueError('grid spacing must be positive')
        if not np.all(np.isfinite(self.values)):
            raise ResolutionError('non-finite samples in field')

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def box(self):
        return self.n * self.spacing

    @classmethod
    def centered(cls, n=config.GRID_N, box=None, values=None):
        """Zero field (or given values) on a box of side `box` centered at the origin."""
        if not is_pow2(n):
            raise ValueError(f'grid size must be a power of two, got {n}')
        box = box if box is not None else config.BOX_SCALE
        h = box / n
        origin = np.full(3, -0.5 * box)
        vals = np.zeros((n, n, n), np.complex128) if values is None else values
        return cls(vals, h, origin)

    @classmethod
    def from_function(cls, fn, n=config.GRID_N, box=config.BOX_SCALE):
        f = cls.centered(n, box)
        f.values = np.asarray(fn(f.points()), dtype=np.complex128).reshape(n, n, n)
        return f

    def like(self, values):
        return Field3D(values, self.spacing, self.origin.copy())

    def axes(self):
        return [self.origin[i] + self.spacing * np.arange(self.n) for i in range(3)]

    def coordinates(self):
        return np.meshgrid(*self.axes(), indexing='ij')

    def points(self):
        # (n^3, 3) coordinates in C order
        return np.stack([c.ravel() for c in self.coordinates()], axis=-1)

    def frequencies(self):
        k = 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.spacing)
        return np.meshgrid(k, k, k, indexing='ij')

    def norm(self):
        # continuous L2 norm by the Riemann sum
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.spacing ** 3))

    def inner(self, other):
        return complex(np.sum(np.conj(self.values) * other.values) * self.spacing ** 3)

    def fourier(self):
        """Continuous-convention transform on the FFT frequency grid: sum f e^{-i x.xi} h^3."""
        kx, ky, kz = self.frequencies()
        phase = np.exp(-1j * (kx * self.origin[0] + ky * self.origin[1] + kz * self.origin[2]))
        return np.fft.fftn(self.values) * self.spacing ** 3 * phase

    def support(self, tol=config.SUPPORT_TOL):
        """(center, radius) of {|f| > tol max|f|}; None for f = 0. Raises BoxError when it touches the box edge."""
        a = np.abs(self.values)
        peak = a.max()
        if peak == 0:
            return None
        mask = a > tol * peak
        edge = np.zeros_like(mask)
        edge[[0, -1], :, :] = edge[:, [0, -1], :] = edge[:, :, [0, -1]] = True
        if np.any(mask & edge):
            raise BoxError('field support touches the box boundary', tolerance=tol,
                           suggestion='enlarge the box or narrow the input field')
        pts = self.points()[mask.ravel()]
        w = a.ravel()[mask.ravel()] ** 2
        c = (pts * w[:, None]).sum(axis=0) / w.sum()
        return c, float(np.linalg.norm(pts - c, axis=1).max() + self.spacing)

    def boundary_mass(self, cells=2):
        # share of |f|^2 in the outer `cells` layers of the box
        v = np.abs(self.values) ** 2
        total = v.sum()
        if total == 0:
            return 0.0
        inner = v[cells:-cells, cells:-cells, cells:-cells].sum()
        return float((total - inner) / total)

    def check_buffer(self, tol=config.BUFFER_MASS_TOL, cells=2):
        m = self.boundary_mass(cells)
        if m > tol:
            raise BoxError(f'{m:.3g} of the field mass reached the box buffer', tolerance=tol,
                           suggestion='enlarge the box (box_scale) or shorten t_max')
        return m

    def sample(self, points, method=config.INTERPOLATION, margin=config.BOX_MARGIN):
        """Periodic interpolation at points: trilinear, cubic B-spline, or trilinear on a 2x spectral upsample."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lo = self.origin - margin * self.box
        hi = self.origin + (1 + margin) * self.box
        if np.any(points < lo) or np.any(points > hi):
            raise BoxError('interpolation points escape the periodic box', tolerance=margin,
                           suggestion='enlarge the box or shrink the r window')
        if method == 'trilinear':
            return periodic_trilinear(self.values, self.origin, self.spacing, points)
        if method == 'fourier':
            up = fourier_upsample(self.values, 2)
            return periodic_trilinear(up, self.origin, self.spacing / 2, points)
        if method == 'cubic':
            u = ((points - self.origin) / self.spacing).T
            re = ndimage.map_coordinates(self.values.real, u, order=3, mode='grid-wrap')
            im = ndimage.map_coordinates(self.values.imag, u, order=3, mode='grid-wrap')
            return re + 1j * im
        raise ValueError(f'Unknown interpolation "{method}".')


def fourier_upsample(values, factor):
    """Trigonometric interpolation onto a grid `factor` times finer (zero padding in frequency)."""
    n = values.shape[0]
    m = n * factor
    F = np.fft.fftshift(np.fft.fftn(values))
    pad = (m - n) // 2
    G = np.zeros((m, m, m), np.complex128)
    G[pad:pad + n, pad:pad + n, pad:pad + n] = F
    return np.fft.ifftn(np.fft.ifftshift(G)) * factor ** 3


def gaussian_packet(n=config.GRID_N, box=config.BOX_SCALE, width=1.0, center=(0.0, 0.0, 0.0), k0=(0.0, 0.0, 0.0)):
    """Normalized test packet exp(-|x-c|^2/(2 w^2) + i k0.x)."""
    c = np.asarray(center, dtype=np.float64)
    k = np.asarray(k0, dtype=np.float64)

    def fn(p):
        d = p - c
        return np.exp(-np.sum(d ** 2, axis=-1) / (2 * width ** 2) + 1j * p @ k)

    f = Field3D.from_function(fn, n, box)
    return f.like(f.values / f.norm())
