"""Ray transform L_V(r, w) = int_0^inf V^(-tau w) exp(i r tau / 2) tau dtau and the norms built on it."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, special
from scipy.interpolate import CubicSpline

from waveop.config import config
from waveop.potentials import GaussianPotential, SolitonPotential
from waveop.utils.general import ResolutionError, WindowError, next_pow2, parallel_map, stable_hash
from waveop.utils.io import load_array, save_array
from waveop.utils.quadrature import DirectionSet, filon_fourier

logger = logging.getLogger(__name__)

KAPPA = 4.0 * math.sqrt(2.0) * math.pi ** 2  # ||L||_{L2_{r,w}} / ||V||_{L2} under the fixed FT convention


@dataclass
class LProfile:
    r: np.ndarray  # symmetric uniform grid -R..R
    values: np.ndarray  # (J, len(r)) complex
    dirs: DirectionSet
    tail_mass: np.ndarray  # per direction, int_{|r|>R} |L| dr from the r^-2 asymptote
    tail_bound: float = 0.0
    provenance: dict = field(default_factory=dict)

    @property
    def dr(self):
        return float(self.r[1] - self.r[0])

    @property
    def r_max(self):
        return float(self.r[-1])

    def column_l1(self):
        # trapezoid in r plus the analytic tail, per direction
        a = np.abs(self.values)
        return self.dr * (a.sum(axis=1) - 0.5 * (a[:, 0] + a[:, -1])) + self.tail_mass

    def column_l2sq(self):
        a = np.abs(self.values) ** 2
        R = self.r_max
        tail = (a[:, 0] + a[:, -1]) * R / 3.0  # int_R^inf (c/r^2)^2 dr, c = |L(R)| R^2
        return self.dr * (a.sum(axis=1) - 0.5 * (a[:, 0] + a[:, -1])) + tail

    def evaluate(self, r, rows=None):
        """L at arbitrary r: cubic spline inside the window, c/r^2 outside."""
        r = np.asarray(r, dtype=np.float64)
        vals = self.values if rows is None else self.values[rows]
        if not hasattr(self, '_spline') or rows is not None:
            spline = CubicSpline(self.r, vals, axis=-1)
            if rows is None:
                self._spline = spline
        else:
            spline = self._spline
        R = self.r_max
        inside = np.abs(r) <= R
        out = np.zeros(vals.shape[:-1] + r.shape, np.complex128)
        out[..., inside] = spline(r[inside])
        hi, lo = r > R, r < -R
        out[..., hi] = vals[..., -1:] * (R / r[hi]) ** 2
        out[..., lo] = vals[..., :1] * (R / r[lo]) ** 2
        return out

    def save(self, path):
        meta = {'r_max': self.r_max, 'dr': self.dr, 'n_r': len(self.r), 'directions': self.dirs.directions,
                'weights': self.dirs.weights, 'dirs': self.dirs.descriptor(), 'tail_mass': self.tail_mass,
                'tail_bound': self.tail_bound, 'provenance': self.provenance,
                'convention': config.CONVENTION_VERSION}
        return save_array(path, self.values, meta)

    @classmethod
    def load(cls, path):
        values, side = load_array(path)
        d = side['dirs']
        dirs = DirectionSet(np.array(side['directions']), np.array(side['weights']), d['order'], d['rule'])
        n = side['n_r']
        r = side['dr'] * (np.arange(n) - (n - 1) // 2)
        return cls(r, values, dirs, np.array(side['tail_mass']), side['tail_bound'], side['provenance'])


@dataclass
class RayGrid:
    tau_max: float
    dtau: float
    n_fft: int
    n_tau: int


def scan_tau_max(sample_fn, ell, tol=config.TAU_TAIL_TOL, cap=math.inf):
    """Smallest tau beyond which max_rows |F(tau)| tau stays below tol * peak; steps are in units of 1/ell."""
    taus = (0.25 / ell) * np.arange(1, 801)
    taus = taus[taus <= cap] if math.isfinite(cap) else taus
    vals = np.max(np.abs(sample_fn(taus)), axis=0) * taus
    peak = vals.max()
    if peak == 0:
        return None, 0.0
    k = np.nonzero(vals > tol * peak)[0][-1]
    if k == len(taus) - 1:
        if not math.isfinite(cap):
            raise ResolutionError('ray samples do not decay within 200 length scales', tolerance=tol,
                                  suggestion='check the potential decay or raise tau_max')
        return float(taus[-1]), float(vals[-1] / peak)
    return float(taus[k + 1]), 0.0


def ray_transform(sample_fn, n_rows, ell, r_max_scale=config.R_MAX_SCALE, r_step_scale=config.R_STEP_SCALE,
                  tau_points=config.TAU_POINTS, tau_max=None, cap=math.inf, workers=None):
    """Half-line transforms int_0^inf F_j(tau) exp(i r tau/2) tau dtau for all rows j on r = -R..R.

    sample_fn(tau) -> (n_rows, len(tau)) complex. Grids are fixed in units of the length scale `ell`,
    so a rescaled input reproduces the same discrete problem.
    Returns (r, values, tail_mass, F0, RayGrid, tau_tail).
    """
    dr = r_step_scale * ell
    tau_tail = 0.0
    if tau_max is None:
        tau_max, tau_tail = scan_tau_max(sample_fn, ell, cap=cap)
    K = int(round(r_max_scale / r_step_scale))
    if tau_max is None:
        r = dr * np.arange(-K, K + 1)
        z = np.zeros((n_rows, len(r)), np.complex128)
        return r, z, np.zeros(n_rows), np.zeros(n_rows), RayGrid(0.0, 0.0, 0, 0), 0.0

    for _ in range(4):
        R = K * dr
        if tau_max * dr > 4 * math.pi:
            raise ResolutionError(f'r step {dr:g} aliases the tau band {tau_max:g}', tolerance=4 * math.pi / tau_max,
                                  suggestion='lower r_step_scale')
        n_fft = next_pow2(max(4 * math.pi * tau_points / (dr * tau_max), 2 * K + 2, tau_points + 1))
        dtau = 4 * math.pi / (n_fft * dr)
        if R * dtau / 2 > math.pi:
            raise ResolutionError('unresolved oscillation: dtau * r_max / 2 > pi', tolerance=math.pi,
                                  suggestion='use a finer tau grid')
        M = max(int(math.ceil(tau_max / dtau)), 8)
        tau = dtau * np.arange(M + 1)
        F = np.asarray(sample_fn(tau), dtype=np.complex128).reshape(n_rows, M + 1)
        h = F * tau
        m_index = np.arange(-K, K + 1)

        chunks = np.array_split(np.arange(n_rows), max(1, min(n_rows, 4 * (workers or config.WORKERS))))
        parts = parallel_map(lambda idx: filon_fourier(h[idx], dtau, m_index, n_fft), [c for c in chunks if len(c)],
                             workers)
        values = np.concatenate(parts, axis=0)

        a = np.abs(values)
        total = a.sum()
        outer = a[:, np.abs(m_index) > 0.9 * K].sum()
        if total == 0 or outer / total <= config.R_WINDOW_GROWTH:
            break
        K *= 2
    else:
        logger.warning(f'r window stopped growing at R={R:g} with outer share {outer / total:.2e}')

    r = dr * m_index
    tail_mass = (a[:, 0] + a[:, -1]) * R
    return r, values, tail_mass, F[:, 0], RayGrid(tau_max, dtau, n_fft, M + 1), tau_tail


def compute_L(p, dirs=None, r_max_scale=config.R_MAX_SCALE, r_step_scale=config.R_STEP_SCALE,
              tau_points=config.TAU_POINTS, tau_max=None, tol=config.L_TOL, workers=None):
    """LProfile of potential p on the direction set."""
    dirs = dirs or DirectionSet.gauss_product()
    ell = p.length_scale
    D = dirs.directions

    def sample(tau):
        return p.fourier_rays(D, tau)

    r, values, tail_mass, F0, grid, tau_tail = ray_transform(sample, len(dirs), ell, r_max_scale, r_step_scale,
                                                             tau_points, tau_max, p.max_frequency, workers)
    R = r[-1]
    asym = 8.0 * np.abs(F0) / R if R > 0 else np.zeros(len(dirs))
    tail_bound = float(dirs.weights @ np.abs(tail_mass - asym))
    if tau_tail:
        tail_bound += float(tau_tail * dirs.weights @ np.abs(values).max(axis=1))
    lp = LProfile(r, values, dirs, tail_mass, tail_bound,
                  {'potential': p.digest(), 'kind': p.kind, 'tau_max': grid.tau_max, 'dtau': grid.dtau,
                   'n_fft': grid.n_fft, 'n_tau': grid.n_tau, 'dirs': dirs.descriptor()})
    total = triple_norm(lp)
    if total > 0 and tail_bound > max(tol, config.L_TOL) * max(total, 1.0) * 1e3:
        logger.warning(f'L tail bound {tail_bound:.3g} is large relative to |||V||| = {total:.6g}')
    return lp


def cached_L(p, dirs=None, cache=None, **kwargs):
    """compute_L behind an on-disk cache keyed by potential digest, grids and convention version."""
    dirs = dirs or DirectionSet.gauss_product()
    if not cache:
        return compute_L(p, dirs, **kwargs)
    from pathlib import Path
    key = stable_hash({'p': p.digest(), 'dirs': dirs.descriptor(), 'kw': kwargs, 'conv': config.CONVENTION_VERSION})
    path = Path(cache) / f'L_{key}.bin'
    if path.exists():
        logger.info(f'L cache hit {path.name}')
        return LProfile.load(path)
    lp = compute_L(p, dirs, **kwargs)
    lp.save(path)
    return lp


def triple_norm(L):
    """|||V||| = sum_j w_j int |L(r, w_j)| dr."""
    return float(L.dirs.weights @ L.column_l1())


def richardson_triple_norm(p, dirs=None, r_step_scale=config.R_STEP_SCALE, **kwargs):
    """|||V||| at dr and dr/2 with error bar |T(dr/2) - T(dr)|/3 + tail bound."""
    coarse = compute_L(p, dirs, r_step_scale=r_step_scale, **kwargs)
    fine = compute_L(p, dirs, r_step_scale=r_step_scale / 2, **kwargs)
    t0, t1 = triple_norm(coarse), triple_norm(fine)
    return t1, abs(t1 - t0) / 3.0 + fine.tail_bound


def gaussian_J(s):
    # int_0^inf u exp(-u^2 + i s u) du
    s = np.asarray(s, dtype=np.float64)
    return 0.5 + 0.25j * math.sqrt(math.pi) * s * special.wofz(s / 2)


def gaussian_L(r, amplitude=1.0, width=1.0):
    """Closed form of L for V = a exp(-|x|^2/sigma^2); direction independent."""
    return 4.0 * amplitude * math.pi ** 1.5 * width * gaussian_J(np.asarray(r) / width)


def plancherel_check(p, dirs=None, L=None, **kwargs):
    """(||L||_{L2_{r,w}}, ||V||_{L2}, ratio); the ratio equals KAPPA for every V."""
    L = L or compute_L(p, dirs, **kwargs)
    l2 = math.sqrt(max(float(L.dirs.weights @ L.column_l2sq()), 0.0))
    v2 = p.l2_norm()
    ratio = l2 / v2 if v2 > 0 else float('nan')
    return {'l2_L': l2, 'l2_V': v2, 'ratio': ratio, 'kappa': KAPPA}


@dataclass
class DyadicReport:
    alpha: float
    lhs: float
    rhs: float
    shells: list  # (k, L1 norm, L2 norm, Cauchy-Schwarz bound) per shell
    boundary_share: float

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else float('nan')


def shell_norms(L, k_range, nodes=32):
    """Per-shell (L1, L2) norms of 1_{[2^k, 2^{k+1}]}(|r|) L over r and w."""
    from waveop.utils.quadrature import gauss_legendre
    out = []
    for k in k_range:
        x, w = gauss_legendre(nodes, 2.0 ** k, 2.0 ** (k + 1))
        rr = np.concatenate([-x[::-1], x])
        ww = np.concatenate([w[::-1], w])
        a = np.abs(L.evaluate(rr))
        l1 = float(L.dirs.weights @ (a @ ww))
        l2 = math.sqrt(float(L.dirs.weights @ (a ** 2 @ ww)))
        out.append((k, l1, l2))
    return out


def dyadic_window(ell, window=config.DYADIC_WINDOW):
    k0 = math.floor(math.log2(ell))
    return range(k0 + window[0], k0 + window[1] + 1)


def dyadic_L_bound(p, alpha, L=None, dirs=None, window=config.DYADIC_WINDOW, tol=config.DYADIC_MASS_TOL):
    """lhs = sum_k 2^{alpha k} ||1_shell L||_{L2}, rhs = ||V||_{B^alpha dot}."""
    from waveop.norms import dyadic_norm
    if not 0 < alpha <= 1:
        raise ValueError(f'alpha must lie in (0, 1], got {alpha}')
    L = L or compute_L(p, dirs)
    ks = dyadic_window(p.length_scale, window)
    shells = shell_norms(L, ks)
    terms = np.array([2.0 ** (alpha * k) * l2 for k, _, l2 in shells])
    lhs = float(terms.sum())
    share = float(max(terms[0], terms[-1]) / lhs) if lhs > 0 else 0.0
    if share > tol:
        raise WindowError(f'dyadic boundary shell carries {share:.2e} of the sum', tolerance=tol,
                          suggestion='widen the dyadic window')
    rows = [(k, l1, l2, math.sqrt(2.0 * 2.0 ** k * 4 * math.pi) * l2) for k, l1, l2 in shells]
    return DyadicReport(alpha, lhs, dyadic_norm(p, alpha, homogeneous=True), rows, share)


# plane slices


@dataclass
class SliceTransform:
    normal: np.ndarray
    s: float
    t: np.ndarray
    phi: np.ndarray
    values: np.ndarray  # (n_phi, len(t)) complex M_s(t, phi)
    tail_mass: np.ndarray
    value: float  # |||delta_{Pi(s)} v|||


def plane_basis(normal):
    n = np.asarray(normal, dtype=np.float64)
    if abs(np.linalg.norm(n) - 1) > 1e-12:
        raise ValueError('plane normal must be a unit vector')
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ n) * n
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def slice_fourier_fn(v, normal, s, n_grid=config.SLICE_GRID, box_scale=config.SLICE_BOX_SCALE):
    """zeta (…, 2) -> 2D transform of w_s(x') = v(s N + x') in the plane basis of N."""
    if isinstance(v, GaussianPotential):
        amp = v.a * math.exp(-(s / v.sigma) ** 2) * math.pi * v.sigma ** 2

        def fn(z):
            return (amp * np.exp(-0.25 * v.sigma ** 2 * np.sum(z ** 2, axis=-1))).astype(np.complex128)
        return fn
    if isinstance(v, SolitonPotential):
        A = -9.0 * v.g / v.lam ** 2
        c = math.sqrt(3.0 / v.lam ** 2 + s * s)

        def fn(z):
            q = np.linalg.norm(z, axis=-1)
            out = np.full(q.shape, A * math.pi / c ** 2, np.complex128)
            nz = q > 0
            out[nz] = A * math.pi * q[nz] * special.k1(c * q[nz]) / c
            return out
        return fn

    N = np.asarray(normal, dtype=np.float64)
    e1, e2 = plane_basis(N)
    ell = v.length_scale
    box = box_scale * ell
    h = box / n_grid
    ax = h * (np.arange(n_grid) - n_grid // 2)
    A1, A2 = np.meshgrid(ax, ax, indexing='ij')
    pts = s * N + A1[..., None] * e1 + A2[..., None] * e2
    inside = v.contains(pts)
    w = np.zeros(pts.shape[:-1])
    w[inside] = v(pts[inside])
    m = 2 * n_grid
    pad = np.zeros((m, m))
    o = (m - n_grid) // 2
    pad[o:o + n_grid, o:o + n_grid] = w
    ft = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(pad))) * h * h
    dk = 2 * math.pi / (m * h)
    kmax = math.pi / h

    def fn(z):
        z = np.asarray(z, dtype=np.float64)
        if np.any(np.abs(z) > kmax * (1 + 1e-12)):
            raise ResolutionError('slice frequency beyond the plane grid band', tolerance=kmax,
                                  suggestion='refine slice_grid')
        u = (z / dk + m // 2).reshape(-1, 2).T
        re = ndimage.map_coordinates(ft.real, u, order=3, mode='constant')
        im = ndimage.map_coordinates(ft.imag, u, order=3, mode='constant')
        return (re + 1j * im).reshape(z.shape[:-1])
    fn.kmax = kmax
    return fn


def sliced_L(v, normal, s, n_phi=config.SLICE_PHI_POINTS, r_max_scale=config.R_MAX_SCALE,
             r_step_scale=config.R_STEP_SCALE, tau_points=config.TAU_POINTS // 2, slice_grid=config.SLICE_GRID,
             workers=None):
    """|||delta_{Pi(s)} v||| = 2 pi int_0^pi int |M_s(t, phi)| dt dphi for the plane s N + N^perp."""
    fn = slice_fourier_fn(v, normal, s, slice_grid)
    phi = (np.arange(n_phi) + 0.5) * (math.pi / n_phi)
    E = np.stack([np.cos(phi), np.sin(phi)], axis=-1)

    def sample(tau):
        return fn(-tau[None, :, None] * E[:, None, :])

    cap = getattr(fn, 'kmax', math.inf)
    t, values, tail_mass, _, _, _ = ray_transform(sample, n_phi, v.length_scale, r_max_scale, r_step_scale,
                                                  tau_points, None, cap, workers)
    a = np.abs(values)
    dt = t[1] - t[0]
    col = dt * (a.sum(axis=1) - 0.5 * (a[:, 0] + a[:, -1])) + tail_mass
    value = 2 * math.pi * (math.pi / n_phi) * float(col.sum())
    return SliceTransform(np.asarray(normal, dtype=np.float64), float(s), t, phi, values, tail_mass, value)


def gaussian_slice_value(amplitude, width, s, t):
    """M_s(t) for the gaussian family; independent of phi."""
    return 4 * math.pi * amplitude * math.exp(-(s / width) ** 2) * gaussian_J(np.asarray(t) / width)
