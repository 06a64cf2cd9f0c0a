"""Potentials V on R^3: direct and Fourier evaluation, rescaling, built-in families.

Fourier convention: V^(xi) = int exp(-i x.xi) V(x) dx, the inverse carries (2*pi)^-3.
"""

import logging
import math

import numpy as np
from scipy import integrate, ndimage
from scipy.interpolate import PchipInterpolator

from waveop.utils.general import AccuracyError, ConfigError, DomainError, ResolutionError, stable_hash
from waveop.utils.fields import Field3D
from waveop.utils.io import load_array

logger = logging.getLogger(__name__)

PI32 = math.pi ** 1.5
SOLITON_FT = 3.0 * math.sqrt(3.0) * math.pi ** 2  # int (1 + |x|^2/3)^-2 dx


class Potential:
    """Base class; subclasses define _eval, _fourier and the scale data."""

    kind = 'abstract'
    radial = False
    analytic_ft = False
    real = True

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != 3:
            raise ValueError(f'points must have a trailing axis of length 3, got {x.shape}')
        if not np.all(np.isfinite(x)):
            raise ValueError('non-finite evaluation point')
        return self._eval(x)

    def fourier(self, xi):
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape[-1] != 3:
            raise ValueError(f'frequencies must have a trailing axis of length 3, got {xi.shape}')
        return self._fourier(xi)

    def fourier_rays(self, directions, tau):
        """Matrix V^(-tau_m omega_j) of shape (J, M)."""
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        tau = np.asarray(tau, dtype=np.float64)
        if self.radial:
            row = self.fourier_radial(np.abs(tau))
            return np.broadcast_to(row, (len(directions), len(tau))).copy()
        return self.fourier(-tau[None, :, None] * directions[:, None, :])

    def fourier_radial(self, k):
        k = np.asarray(k, dtype=np.float64)
        xi = np.zeros(k.shape + (3,))
        xi[..., 2] = k
        return self.fourier(xi)

    def profile(self, r):
        if not self.radial:
            raise TypeError(f'{self.kind} potential has no radial profile')
        return self._profile(np.abs(np.asarray(r, dtype=np.float64)))

    def _eval(self, x):
        return self._profile(np.linalg.norm(x, axis=-1))

    def contains(self, x):
        # points where direct evaluation is defined
        return np.ones(np.asarray(x).shape[:-1], dtype=bool)

    @property
    def max_frequency(self):
        return math.inf

    def l2_norm(self):
        raise NotImplementedError

    def support_radius(self, tol=1e-12):
        raise NotImplementedError

    def descriptor(self):
        raise NotImplementedError

    def digest(self):
        return stable_hash(self.descriptor())

    def __mul__(self, c):
        return self.scaled(float(c))

    __rmul__ = __mul__

    def __repr__(self):
        d = self.descriptor()
        args = ', '.join(f'{k}={v}' for k, v in d.items() if k != 'kind' and not isinstance(v, (list, np.ndarray)))
        return f'{type(self).__name__}({args})'


class GaussianPotential(Potential):
    """V(x) = a exp(-|x|^2 / sigma^2)."""

    kind = 'gaussian'
    radial = True
    analytic_ft = True

    def __init__(self, amplitude=1.0, width=1.0):
        if width <= 0:
            raise ValueError(f'width must be positive, got {width}')
        self.a = float(amplitude)
        self.sigma = float(width)

    def _profile(self, r):
        return self.a * np.exp(-(r / self.sigma) ** 2)

    def _fourier(self, xi):
        k2 = np.sum(xi ** 2, axis=-1)
        return (self.a * PI32 * self.sigma ** 3 * np.exp(-0.25 * self.sigma ** 2 * k2)).astype(np.complex128)

    def fourier_radial(self, k):
        k = np.asarray(k, dtype=np.float64)
        return (self.a * PI32 * self.sigma ** 3 * np.exp(-0.25 * (self.sigma * k) ** 2)).astype(np.complex128)

    @property
    def length_scale(self):
        return self.sigma

    def rescale(self, lam):
        return GaussianPotential(self.a * lam ** 2, self.sigma / lam)

    def scaled(self, c):
        return GaussianPotential(self.a * c, self.sigma)

    def l2_norm(self):
        return abs(self.a) * (math.pi / 2) ** 0.75 * self.sigma ** 1.5

    def support_radius(self, tol=1e-12):
        return self.sigma * math.sqrt(math.log(1.0 / tol))

    def descriptor(self):
        return {'kind': self.kind, 'amplitude': self.a, 'width': self.sigma}


class SolitonPotential(Potential):
    """Linearization about the ground state family: V(x) = -g lam^2 W(lam x)^4, W = (1 + |x|^2/3)^-1/2."""

    kind = 'soliton'
    radial = True
    analytic_ft = True

    def __init__(self, coupling=1.0, scale=1.0):
        if scale <= 0:
            raise ValueError(f'scale must be positive, got {scale}')
        self.g = float(coupling)
        self.lam = float(scale)

    def _profile(self, r):
        return -self.g * self.lam ** 2 * (1.0 + (self.lam * r) ** 2 / 3.0) ** -2

    def _fourier(self, xi):
        return self.fourier_radial(np.linalg.norm(xi, axis=-1))

    def fourier_radial(self, k):
        k = np.asarray(k, dtype=np.float64)
        return (-self.g * SOLITON_FT / self.lam * np.exp(-math.sqrt(3.0) * k / self.lam)).astype(np.complex128)

    @property
    def length_scale(self):
        return 1.0 / self.lam

    def rescale(self, lam):
        return SolitonPotential(self.g, self.lam * lam)

    def scaled(self, c):
        return SolitonPotential(self.g * c, self.lam)

    def l2_norm(self):
        return abs(self.g) * math.sqrt(self.lam * SOLITON_FT / 8.0)

    def support_radius(self, tol=1e-12):
        return math.sqrt(3.0 * (tol ** -0.5 - 1.0)) / self.lam

    def descriptor(self):
        return {'kind': self.kind, 'coupling': self.g, 'scale': self.lam}


class RadialTablePotential(Potential):
    """Tabulated V(r): monotone cubic inside the table, linear ramp to zero past its end."""

    kind = 'radial_table'
    radial = True

    def __init__(self, r, v):
        r = np.asarray(r, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 4:
            raise ValueError('radial table needs matching 1D r and v with at least 4 rows')
        if r[0] < 0 or np.any(np.diff(r) <= 0):
            raise ValueError('table radii must be nonnegative and strictly increasing')
        self.r, self.v = r, v
        self._interp = PchipInterpolator(r, v, extrapolate=False)
        slope = float(self._interp.derivative()(r[-1]))
        v_end = v[-1]
        if v_end != 0 and slope * v_end < 0:
            self.r_zero = r[-1] - v_end / slope
        else:
            self.r_zero = r[-1] + (r[-1] - r[-2])
        self._ft_cache = {}

    def _profile(self, r):
        out = np.zeros_like(r)
        inside = r <= self.r[-1]
        out[inside] = self._interp(np.maximum(r[inside], self.r[0]))
        ramp = (r > self.r[-1]) & (r < self.r_zero)
        out[ramp] = self.v[-1] * (self.r_zero - r[ramp]) / (self.r_zero - self.r[-1])
        return out

    def _scalar(self, r):
        return float(self._profile(np.array([r]))[0])

    def _radial_ft(self, k):
        if k in self._ft_cache:
            return self._ft_cache[k]
        r_end = self.r_zero
        if k == 0.0:
            val, err = integrate.quad(lambda r: self._scalar(r) * r * r, 0.0, r_end, limit=400)
            val, err = 4 * math.pi * val, 4 * math.pi * err
        else:
            val, err = integrate.quad(lambda r: self._scalar(r) * r, 0.0, r_end, weight='sin', wvar=k,
                                      limit=400)
            val, err = 4 * math.pi * val / k, 4 * math.pi * err / k
        scale = 4 * math.pi * integrate.trapezoid(np.abs(self.v) * self.r ** 2, self.r)
        if err > 1e-8 * scale + 1e-14:
            raise AccuracyError(f'radial Fourier quadrature did not converge at k={k:g}', residual=err,
                                tolerance=1e-8 * scale, suggestion='smooth or densify the radial table')
        self._ft_cache[k] = val
        return val

    def fourier_radial(self, k):
        k = np.asarray(k, dtype=np.float64)
        flat = np.array([self._radial_ft(float(x)) for x in k.ravel()])
        return flat.reshape(k.shape).astype(np.complex128)

    def _fourier(self, xi):
        return self.fourier_radial(np.linalg.norm(xi, axis=-1))

    @property
    def length_scale(self):
        w = np.abs(self.v) * self.r ** 2
        return float(math.sqrt(integrate.trapezoid(w * self.r ** 2, self.r) / integrate.trapezoid(w, self.r)))

    def rescale(self, lam):
        return RadialTablePotential(self.r / lam, self.v * lam ** 2)

    def scaled(self, c):
        return RadialTablePotential(self.r, self.v * c)

    def l2_norm(self):
        rr = np.linspace(0.0, self.r_zero, 4001)
        return float(math.sqrt(4 * math.pi * integrate.trapezoid(self._profile(rr) ** 2 * rr ** 2, rr)))

    def support_radius(self, tol=1e-12):
        return float(self.r_zero)

    def descriptor(self):
        return {'kind': self.kind, 'r': self.r, 'v': self.v}


class GridPotential(Potential):
    """Samples on a Field3D grid, complex allowed (modulated potentials).

    Fourier values by cubic interpolation of a 2x zero-padded FFT.
    """

    kind = 'grid'

    def __init__(self, field):
        self.field = field
        self.real = not np.any(field.values.imag)
        self._ft = None

    @property
    def h(self):
        return self.field.spacing

    def contains(self, x):
        f = self.field
        hi = f.origin + f.spacing * (f.n - 1)
        return np.all((x >= f.origin - 1e-12) & (x <= hi + 1e-12), axis=-1)

    def _eval(self, x):
        f = self.field
        lo = f.origin
        hi = f.origin + f.spacing * (f.n - 1)
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise DomainError('query point outside the potential grid box',
                              suggestion='evaluate inside the sampled box')
        u = ((x - lo) / f.spacing).reshape(-1, 3).T
        vals = ndimage.map_coordinates(f.values.real, u, order=1, mode='nearest')
        if not self.real:
            vals = vals + 1j * ndimage.map_coordinates(f.values.imag, u, order=1, mode='nearest')
        return vals.reshape(x.shape[:-1])

    @property
    def max_frequency(self):
        return math.pi / self.h

    def _padded_ft(self):
        if self._ft is None:
            f = self.field
            m = 2 * f.n
            center = f.origin + 0.5 * f.spacing * f.n  # lands on index m//2 after padding
            pad = np.zeros((m, m, m), np.float64 if self.real else np.complex128)
            s = (m - f.n) // 2
            pad[s:s + f.n, s:s + f.n, s:s + f.n] = f.values.real if self.real else f.values
            # continuous FT about the box center, laid out with zero frequency in the middle
            ft = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(pad))) * f.spacing ** 3
            self._ft = (ft, 2 * math.pi / (m * f.spacing), m, center)
        return self._ft

    def _fourier(self, xi):
        if np.any(np.abs(xi) > self.max_frequency * (1 + 1e-12)):
            raise ResolutionError('frequency beyond the grid Nyquist band', tolerance=self.max_frequency,
                                  suggestion='refine the potential grid')
        ft, dk, m, center = self._padded_ft()
        u = (xi / dk + m // 2).reshape(-1, 3).T
        re = ndimage.map_coordinates(ft.real, u, order=3, mode='constant')
        im = ndimage.map_coordinates(ft.imag, u, order=3, mode='constant')
        vals = (re + 1j * im).reshape(xi.shape[:-1])
        return vals * np.exp(-1j * (xi @ center))

    @property
    def length_scale(self):
        pts = self.field.points()
        w = np.abs(self.field.values.real).ravel()
        if w.sum() == 0:
            return self.field.box / 8
        return float(math.sqrt(np.sum(w * np.sum(pts ** 2, axis=-1)) / w.sum()))

    def rescale(self, lam):
        f = self.field
        return GridPotential(Field3D(f.values * lam ** 2, f.spacing / lam, f.origin / lam))

    def scaled(self, c):
        return GridPotential(self.field.like(self.field.values * c))

    def l2_norm(self):
        return self.field.norm()

    def support_radius(self, tol=1e-12):
        v = np.abs(self.field.values.real).ravel()
        if v.max() == 0:
            return 0.0
        pts = self.field.points()[v > tol * v.max()]
        return float(np.max(np.linalg.norm(pts, axis=-1)) + self.h)

    def descriptor(self):
        f = self.field
        d = {'kind': self.kind, 'spacing': f.spacing, 'origin': f.origin, 'values': f.values.real}
        if not self.real:
            d['imag'] = f.values.imag
        return d


def zero_potential():
    return GaussianPotential(0.0, 1.0)


def from_descriptor(d):
    """Build a Potential from a config mapping."""
    kind = d.get('kind')
    if kind == 'gaussian':
        return GaussianPotential(d['amplitude'], d['width'])
    if kind == 'soliton':
        return SolitonPotential(d['coupling'], d['scale'])
    if kind == 'radial_table':
        table = np.loadtxt(d['table'], ndmin=2)
        return RadialTablePotential(table[:, 0], table[:, 1])
    if kind == 'grid':
        values, side = load_array(d['samples'])
        return GridPotential(Field3D(values, side['spacing'], side['origin']))
    raise ConfigError(f'unknown potential kind {kind!r}')


def eval_potential(p, x):
    return p(x)


def fourier_potential(p, xi):
    return p.fourier(xi)


def rescale(p, lam):
    """x -> lam^2 V(lam x)."""
    if not lam > 0:
        raise ValueError(f'scale must be positive, got {lam}')
    if lam == 1:
        return p
    return p.rescale(lam)


def brute_fourier(p, xi, n=128, box=None):
    """Riemann-sum transform on an n^3 box; oracle for the analytic and radial paths."""
    box = box or 16 * p.length_scale
    h = box / n
    ax = -0.5 * box + h * np.arange(n)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing='ij')
    V = p(np.stack([X, Y, Z], axis=-1))
    xi = np.asarray(xi, dtype=np.float64)
    return complex(np.sum(V * np.exp(-1j * (X * xi[0] + Y * xi[1] + Z * xi[2]))) * h ** 3)


def radial_fourier_direct(p, k, r_max=None):
    """(4 pi / k) int_0^inf V(r) sin(kr) r dr by adaptive quadrature on a radial potential."""
    r_max = r_max or p.support_radius(1e-14)
    if k == 0:
        val, _ = integrate.quad(lambda r: float(p.profile(r)) * r * r, 0, r_max, limit=400)
        return 4 * math.pi * val
    val, _ = integrate.quad(lambda r: float(p.profile(r)) * r, 0, r_max, weight='sin', wvar=k, limit=400)
    return 4 * math.pi * val / k
