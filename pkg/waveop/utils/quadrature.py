"""Quadrature rules: spherical direction sets, Gauss-Legendre helpers and
Filon-type endpoint corrections for Fourier integrals on a uniform grid."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from waveop.config import config

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


@dataclass
class DirectionSet:
    """Unit directions with positive weights summing to 4*pi."""

    directions: np.ndarray  # (J, 3)
    weights: np.ndarray  # (J,)
    order: int
    rule: str = 'gauss_product'
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.directions = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(self.directions) != len(self.weights):
            raise ValueError('directions and weights differ in length')
        if np.any(self.weights <= 0):
            raise ValueError('direction weights must be positive')

    def __len__(self):
        return len(self.weights)

    def integrate(self, values, axis=-1):
        # sum_j w_j f(omega_j)
        return np.tensordot(np.moveaxis(np.asarray(values), axis, -1), self.weights, axes=([-1], [0]))

    def descriptor(self):
        return {'rule': self.rule, 'order': int(self.order), 'n': len(self)}

    @classmethod
    def gauss_product(cls, order=config.DIRS_ORDER):
        """Gauss-Legendre in cos(theta) times 2*order uniform azimuths; exact to degree 2*order-1."""
        if order < 1:
            raise ValueError(f'order must be positive, got {order}')
        mu, wmu = special.roots_legendre(order)
        nphi = 2 * order
        phi = (np.arange(nphi) + 0.5) * (2 * math.pi / nphi)
        st = np.sqrt(1.0 - mu ** 2)
        d = np.stack([np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(mu, np.ones(nphi))], axis=-1)
        w = np.outer(wmu, np.full(nphi, 2 * math.pi / nphi))
        return cls(d.reshape(-1, 3), w.ravel(), order, 'gauss_product')

    @classmethod
    def lebedev(cls, order=config.LEBEDEV_ORDER):
        """Lebedev rule from scipy; weights renormalized to 4*pi."""
        try:
            x, w = integrate.lebedev_rule(order)
        except ValueError as e:
            raise ValueError(f'no Lebedev rule of order {order}: {e}') from e
        w = np.asarray(w, dtype=np.float64)
        return cls(np.asarray(x).T, w * (FOUR_PI / w.sum()), order, 'lebedev')

    @classmethod
    def build(cls, rule='gauss_product', order=None):
        if rule == 'gauss_product':
            return cls.gauss_product(order or config.DIRS_ORDER)
        if rule == 'lebedev':
            return cls.lebedev(order or config.LEBEDEV_ORDER)
        raise ValueError(f'Unknown direction rule "{rule}".')


def gauss_legendre(n, a=-1.0, b=1.0):
    # nodes and weights on [a, b]
    x, w = special.roots_legendre(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def composite_gauss_legendre(edges, n):
    # panel-wise Gauss-Legendre on consecutive edges
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(n, a, b)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def filon_corrections(theta, limit=config.FILON_SMALL_THETA):
    """Cubic endpoint correction functions W, alpha_0..alpha_3 for an equispaced Fourier integral.

    With h_j sampled at a + j*d, j = 0..M, and theta = omega*d:
        int_a^b h(t) exp(i omega t) dt ~ d exp(i omega a) [W * sum_j h_j exp(i j theta)
            + sum_k alpha_k h_k + exp(i omega (b-a)) sum_k conj(alpha_k) h_{M-k}]
    Vectorized over theta; the series branch is used below `limit`.
    """
    t = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    w = np.empty(t.shape)
    a = np.empty((4,) + t.shape, dtype=np.complex128)

    small = np.abs(t) < limit
    if np.any(small):
        s = t[small]
        s2, s4, s6 = s ** 2, s ** 4, s ** 6
        w[small] = 1.0 - 11.0 * s4 / 720.0 + 23.0 * s6 / 15120.0
        a[0, small] = (-2.0 / 3.0 + s2 / 45.0 + 103.0 * s4 / 15120.0 - 169.0 * s6 / 226800.0
                       + 1j * s * (2.0 / 45.0 + 2.0 * s2 / 105.0 - 8.0 * s4 / 2835.0 + 86.0 * s6 / 467775.0))
        a[1, small] = (7.0 / 24.0 - 7.0 * s2 / 180.0 + 5.0 * s4 / 3456.0 - 7.0 * s6 / 259200.0
                       + 1j * s * (7.0 / 72.0 - s2 / 168.0 + 11.0 * s4 / 72576.0 - 13.0 * s6 / 5987520.0))
        a[2, small] = (-1.0 / 6.0 + s2 / 45.0 - 5.0 * s4 / 6048.0 + s6 / 64800.0
                       + 1j * s * (-7.0 / 90.0 + s2 / 210.0 - 11.0 * s4 / 90720.0 + 13.0 * s6 / 7484400.0))
        a[3, small] = (1.0 / 24.0 - s2 / 180.0 + 5.0 * s4 / 24192.0 - s6 / 259200.0
                       + 1j * s * (7.0 / 360.0 - s2 / 840.0 + 11.0 * s4 / 362880.0 - 13.0 * s6 / 29937600.0))

    big = ~small
    if np.any(big):
        s = t[big]
        s2, s4 = s ** 2, s ** 4
        c, sn = np.cos(s), np.sin(s)
        c2, sn2 = np.cos(2 * s), np.sin(2 * s)
        p = 6.0 + s2
        w[big] = p * (3.0 - 4.0 * c + c2) / (3.0 * s4)
        a[0, big] = ((-42.0 + 5.0 * s2) + p * (8.0 * c - c2)) / (6.0 * s4) \
            + 1j * (s * (-12.0 + 6.0 * s2) + p * sn2) / (6.0 * s4)
        a[1, big] = (14.0 * (3.0 - s2) - 7.0 * p * c) / (6.0 * s4) + 1j * (30.0 * s - 5.0 * p * sn) / (6.0 * s4)
        a[2, big] = (-4.0 * (3.0 - s2) + 2.0 * p * c) / (3.0 * s4) + 1j * (-12.0 * s + 2.0 * p * sn) / (3.0 * s4)
        a[3, big] = (2.0 * (3.0 - s2) - p * c) / (6.0 * s4) + 1j * (6.0 * s - p * sn) / (6.0 * s4)
    return w, a


def filon_fourier(samples, d, m_index, n_fft):
    """Half-line Fourier integrals int_0^{M d} h(t) exp(i theta_m t / d) dt for many rows at once.

    samples: (..., M+1) values h_j; requires M+1 <= n_fft.
    m_index: signed integer frequencies m with theta_m = 2*pi*m/n_fft, |m| < n_fft/2.
    """
    h = np.asarray(samples)
    M = h.shape[-1] - 1
    if M + 1 > n_fft:
        raise ValueError(f'{M + 1} samples do not fit an FFT of length {n_fft}')
    if M < 7:
        raise ValueError('need at least 8 samples for cubic endpoint corrections')
    m = np.asarray(m_index)
    if np.any(np.abs(m) >= n_fft // 2):
        raise ValueError('frequency index beyond the FFT Nyquist band')
    theta = 2.0 * math.pi * m / n_fft

    dft = np.fft.ifft(h, n=n_fft, axis=-1) * n_fft  # sum_j h_j exp(+i j theta)
    dft = dft[..., np.mod(m, n_fft)]
    w, a = filon_corrections(theta)

    left = sum(a[k] * h[..., k:k + 1] for k in range(4))
    right = sum(np.conj(a[k]) * h[..., M - k:M - k + 1] for k in range(4))
    return d * (w * dft + left + np.exp(1j * theta * M) * right)
