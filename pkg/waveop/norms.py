"""Scaling-invariant norms of potentials and the smallness gate."""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from waveop.config import config
from waveop.lfun import plane_basis, richardson_triple_norm, sliced_L
from waveop.utils.general import DivergenceError, DomainError, WindowError, parallel_map
from waveop.utils.quadrature import DirectionSet, gauss_legendre

logger = logging.getLogger(__name__)


def plane_normals(order=config.NORMALS_ORDER):
    """Normals of distinct planes: the upper half of a product rule (N and -N give the same plane)."""
    d = DirectionSet.gauss_product(order)
    keep = d.directions[:, 2] > 0
    return DirectionSet(d.directions[keep], 2 * d.weights[keep], order, 'gauss_product_hemisphere')


def offset_grid(ell, s_points=config.S_POINTS, s_window=config.S_WINDOW_SCALE):
    """Nodes and weights for int ds over |s| <= s_window*ell: s = ell sinh(u), trapezoid in u."""
    if s_points % 2 == 0:
        s_points += 1
    u_max = math.asinh(s_window)
    u = np.linspace(-u_max, u_max, s_points)
    du = u[1] - u[0]
    w = np.full(s_points, du)
    w[0] = w[-1] = 0.5 * du
    return ell * np.sinh(u), ell * np.cosh(u) * w


def _offset_integral(values, s, w):
    # window integral plus an s^-3 tail fitted to the end values
    values = np.asarray(values, dtype=np.float64)
    S = s[-1]
    tail = 0.5 * S * (values[0] + values[-1])
    return float(values @ w + tail), float(tail)


@dataclass
class SlicedNorm:
    value: float  # max over normals
    per_normal: np.ndarray
    normals: np.ndarray
    s: np.ndarray
    profiles: np.ndarray  # (n_normals, n_s) slice values
    tail: float

    @property
    def spread(self):
        v = self.per_normal
        return float((v.max() - v.min()) / v.max()) if v.max() > 0 else 0.0


def _sliced_sup(slice_fn, v, normals, s_points, s_window, workers):
    ell = v.length_scale
    normals = normals or plane_normals()
    s, w = offset_grid(ell, s_points, s_window)
    N = normals.directions
    # rotation invariance lets an analytic radial potential share one normal
    share = v.radial and v.analytic_ft
    rows = [N[0]] if share else list(N)
    jobs = [(n, si) for n in rows for si in s]
    vals = np.array(parallel_map(lambda job: slice_fn(v, job[0], job[1]), jobs, workers)).reshape(len(rows), len(s))
    if share:
        vals = np.repeat(vals, len(N), axis=0)
    per, tails = [], []
    for row in vals:
        total, tail = _offset_integral(row, s, w)
        per.append(total)
        tails.append(tail)
    per = np.array(per)
    if per.max() > 0 and max(tails) > 1e-3 * per.max():
        logger.warning(f'offset tail carries {max(tails) / per.max():.2e} of the sliced norm; widen s_window')
    return SlicedNorm(float(per.max()), per, N, s, vals, float(max(tails)))


def _slice_triple(v, normal, s, **kwargs):
    ell = v.length_scale
    widen = max(1.0, abs(s) / (4 * ell))
    r_max_scale = kwargs.pop('r_max_scale', config.R_MAX_SCALE) * widen
    return sliced_L(v, normal, s, r_max_scale=r_max_scale, **kwargs).value


def b_norm_profile(v, normals=None, s_points=config.S_POINTS, s_window=config.S_WINDOW_SCALE, workers=None,
                   **slice_kwargs):
    return _sliced_sup(lambda p, n, s: _slice_triple(p, n, s, workers=1, **slice_kwargs), v, normals, s_points,
                       s_window, workers)


def b_norm(v, normals=None, s_points=config.S_POINTS, s_window=config.S_WINDOW_SCALE, workers=None, **slice_kwargs):
    """||v||_B = sup over planes of int |||delta_{Pi(s)} v||| ds, sup taken over the sampled normals."""
    return b_norm_profile(v, normals, s_points, s_window, workers, **slice_kwargs).value


# Littlewood-Paley pieces on planes


def lp_bump(rho):
    """phi = 1 on rho <= 1, 0 on rho >= 2, C^3 polynomial transition."""
    u = np.clip(2.0 - np.asarray(rho, dtype=np.float64), 0.0, 1.0)
    return u ** 4 * (35.0 - 84.0 * u + 70.0 * u * u - 20.0 * u ** 3)


def lp_window(rho):
    """psi(rho) = phi(rho) - phi(2 rho), supported in 1/2 <= rho <= 2; sum_k psi(2^-k rho) = 1 for rho > 0."""
    rho = np.asarray(rho, dtype=np.float64)
    return lp_bump(rho) - lp_bump(2.0 * rho)


def h_half_norm_2d(f, h):
    """||f||_{H^1/2 dot} of a periodic 2D grid function via |xi| weighting; the xi = 0 mode is dropped."""
    n = f.shape[0]
    k = 2 * math.pi * np.fft.fftfreq(n, d=h)
    KX, KY = np.meshgrid(k, k, indexing='ij')
    F = np.fft.fft2(f)
    return math.sqrt(h * h / (n * n) * float(np.sum(np.hypot(KX, KY) * np.abs(F) ** 2)))


def _plane_samples(v, normal, s, box, n):
    e1, e2 = plane_basis(normal)
    hh = box / n
    ax = hh * (np.arange(n) - n // 2)
    A1, A2 = np.meshgrid(ax, ax, indexing='ij')
    pts = s * np.asarray(normal) + A1[..., None] * e1 + A2[..., None] * e2
    inside = v.contains(pts)
    w = np.zeros(pts.shape[:-1])
    w[inside] = v(pts[inside])
    return w, np.hypot(A1, A2), hh


def lp_slice_sum(v, normal, s, window=(-20, 10), n_grid=config.SLICE_GRID, tol=1e-4):
    """sum_k 2^{k/2} ||psi(2^-k x') w_s||_{H^1/2 dot} with each shell on its own grid of side 2^{k+3}."""
    k0 = math.floor(math.log2(math.hypot(v.length_scale, s)))
    terms = []
    for k in range(k0 + window[0], k0 + window[1] + 1):
        box = 2.0 ** (k + 3)
        w, rho, hh = _plane_samples(v, normal, s, box, n_grid)
        terms.append(2.0 ** (k / 2) * h_half_norm_2d(lp_window(rho / 2.0 ** k) * w, hh))
    terms = np.array(terms)
    total = float(terms.sum())
    if total > 0 and max(terms[0], terms[-1]) > tol * total:
        raise WindowError(f'Littlewood-Paley boundary shell carries {max(terms[0], terms[-1]) / total:.2e}',
                          tolerance=tol, suggestion='widen the dyadic window')
    return total


def b_star_profile(v, normals=None, s_points=config.S_POINTS, s_window=config.S_WINDOW_SCALE, workers=None,
                   n_grid=config.SLICE_GRID):
    return _sliced_sup(lambda p, n, s: lp_slice_sum(p, n, s, n_grid=n_grid), v, normals, s_points, s_window, workers)


def b_star_norm(v, normals=None, s_points=config.S_POINTS, s_window=config.S_WINDOW_SCALE, workers=None,
                n_grid=config.SLICE_GRID):
    """sup_N int sum_k 2^{k/2} ||psi(2^-k x') v(sN + x')||_{H^1/2 dot(N^perp)} ds."""
    return b_star_profile(v, normals, s_points, s_window, workers, n_grid).value


# dyadic shells in R^3


def shell_l2(v, k_range, nodes=config.SHELL_POINTS):
    """||1_{2^k <= |x| <= 2^{k+1}} v||_2 per shell."""
    if v.radial:
        out = []
        for k in k_range:
            r, w = gauss_legendre(nodes, 2.0 ** k, 2.0 ** (k + 1))
            out.append(math.sqrt(4 * math.pi * float(w @ (np.abs(v.profile(r)) ** 2 * r * r))))
        return np.array(out)
    f = v.field
    rr = np.linalg.norm(f.points(), axis=-1)
    vals = np.abs(f.values.real.ravel()) ** 2 * f.spacing ** 3
    return np.array([math.sqrt(float(vals[(rr >= 2.0 ** k) & (rr < 2.0 ** (k + 1))].sum())) for k in k_range])


def ball_l2(v, radius=1.0, nodes=config.SHELL_POINTS):
    if v.radial:
        r, w = gauss_legendre(nodes, 0.0, radius)
        return math.sqrt(4 * math.pi * float(w @ (np.abs(v.profile(r)) ** 2 * r * r)))
    f = v.field
    rr = np.linalg.norm(f.points(), axis=-1)
    return math.sqrt(float(np.sum(np.abs(f.values.real.ravel()[rr < radius]) ** 2) * f.spacing ** 3))


def dyadic_terms(v, beta, homogeneous=True, window=(-40, 40)):
    """Shell indices j, shell norms ||1_{shell j} v||_2 and the weighted terms 2^{j beta} ||.||_2."""
    k0 = math.floor(math.log2(v.length_scale))
    if homogeneous:
        ks = np.arange(k0 + window[0], k0 + window[1] + 1)
    else:
        ks = np.arange(0, max(k0, 0) + window[1] + 1)
    l2 = shell_l2(v, ks)
    return ks, l2, 2.0 ** (beta * ks) * l2


def dyadic_norm(v, beta, homogeneous=True, window=(-40, 40), tol=config.DYADIC_MASS_TOL):
    """Homogeneous: sum_j 2^{j beta} ||1_{shell j} v||_2. Inhomogeneous: unit-ball term plus the j >= 0 sum."""
    if beta < 0:
        raise ValueError(f'beta must be nonnegative, got {beta}')
    _, _, terms = dyadic_terms(v, beta, homogeneous, window)
    total = float(terms.sum())
    if total > 0:
        edge = terms[-1] if not homogeneous else max(terms[0], terms[-1])
        if edge > tol * total:
            raise WindowError(f'dyadic boundary shell carries {edge / total:.2e} of the norm', tolerance=tol,
                              suggestion='widen the shell window')
    if not homogeneous:
        total += ball_l2(v)
    return total


def lorentz_321_norm(v, points=20000, tol=1e-3):
    """||v||_{L^{3/2,1}} = int_0^inf t^{-1/3} v*(t) dt with v* the decreasing rearrangement of |v|."""
    if not v.radial:
        raise DomainError('Lorentz norm needs a radial potential', suggestion='use a radial family or table')
    ell = v.length_scale
    r_max = v.support_radius(1e-14)
    if not math.isfinite(r_max):
        r_max = 1e6 * ell
    r = ell * np.sinh(np.linspace(0.0, math.asinh(r_max / ell), points))
    a = np.abs(v.profile(r))
    if a.max() == 0:
        return 0.0
    c = (4 * math.pi / 3) ** (-1.0 / 3.0) * 4 * math.pi
    tail = r[-1] ** 2 * a[-1]  # int_R^inf of a c/r^4 tail times r is c/(2 R^2)
    if np.all(np.diff(a) <= 1e-14 * a.max()):
        val, err = integrate.quad(lambda x: abs(float(v.profile(x))) * x, 0.0, r_max, limit=500,
                                  points=[ell * k for k in (0.5, 1, 2, 4) if ell * k < r_max])
        total = c * (val + 0.5 * tail)
    else:
        # rearrange numerically: cell volumes sorted by decreasing |v|
        vol = 4 * math.pi / 3 * np.diff(r ** 3)
        mid = 0.5 * (a[1:] + a[:-1])
        order = np.argsort(-mid, kind='stable')
        t = np.concatenate([[0.0], np.cumsum(vol[order])])
        total = 1.5 * float(np.sum(mid[order] * np.diff(t ** (2.0 / 3.0)))) + c * 0.5 * tail
    if 0.5 * c * tail > tol * total:
        raise DivergenceError('Lorentz norm tail does not converge within the radial window', tolerance=tol,
                              suggestion='the potential must decay faster than r^-2')
    return float(total)


def angular_multiplier_check(f, h=1.0):
    """||(x/|x|)_i f||_{H^1/2} / ||f||_{H^1/2} for i = 1, 2 on a centered 2D grid; None when f = 0."""
    f = np.asarray(f)
    n = f.shape[0]
    base = h_half_norm_2d(f, h)
    if base == 0:
        return None
    ax = h * (np.arange(n) - n // 2)
    X, Y = np.meshgrid(ax, ax, indexing='ij')
    rho = np.hypot(X, Y)
    with np.errstate(invalid='ignore', divide='ignore'):
        ux = np.where(rho > 0, X / rho, 0.0)
        uy = np.where(rho > 0, Y / rho, 0.0)
    rx = h_half_norm_2d(ux * f, h) / base
    ry = h_half_norm_2d(uy * f, h) / base
    return {'x': rx, 'y': ry, 'max': max(rx, ry)}


# report and gate


@dataclass
class NormReport:
    b_norm: float
    b_star_norm: float
    dyadic_half: float
    triple: float
    triple_error: float = 0.0
    lorentz_321: float = None
    b_norm_spread: float = 0.0
    c0: float = config.C0
    born_ratio: float = None
    diagnostics: list = field(default_factory=list)

    @property
    def b_star_total(self):
        # ||V||_B + ||V||_{B^1/2 dot}
        return self.b_norm + self.dyadic_half

    @property
    def smallness_margin(self):
        return self.b_star_total / self.c0

    def as_dict(self):
        d = asdict(self)
        d.update(b_star_total=self.b_star_total, smallness_margin=self.smallness_margin)
        return d


@dataclass
class GateResult:
    passed: bool
    margin: float
    born_ratio: float
    reason: str = ''


def smallness_gate(report, c0=None, born_ratio=None):
    """Pass iff ||V||_B + ||V||_{B^1/2 dot} <= c0 and the measured Born ratio is below 1."""
    c0 = c0 if c0 is not None else report.c0
    ratio = born_ratio if born_ratio is not None else report.born_ratio
    margin = report.b_star_total / c0
    reasons = []
    if report.b_star_total > c0:
        reasons.append(f'||V||_B + ||V||_B1/2 = {report.b_star_total:.4g} exceeds c0 = {c0:g}')
    if ratio is not None and ratio >= 1:
        reasons.append(f'Born ratio {ratio:.4g} >= 1, series does not contract')
    return GateResult(not reasons, margin, ratio, '; '.join(reasons))


def norm_report(v, dirs=None, normals=None, c0=config.C0, s_points=config.S_POINTS, with_b_star=True, workers=None,
                **l_kwargs):
    """All norms of v in one report; the triple norm carries a Richardson error bar."""
    triple, err = richardson_triple_norm(v, dirs, workers=workers, **l_kwargs)
    bp = b_norm_profile(v, normals, s_points, workers=workers)
    bs = b_star_norm(v, normals, s_points, workers=workers) if with_b_star else float('nan')
    half = dyadic_norm(v, 0.5)
    lor = lorentz_321_norm(v) if v.radial else None
    diag = [{'normal': n.tolist(), 'b_norm': float(b)} for n, b in zip(bp.normals, bp.per_normal)]
    rep = NormReport(bp.value, bs, half, triple, err, lor, bp.spread, c0, None, diag)
    if triple > rep.b_norm + err + 1e-3 * triple:
        logger.warning(f'|||V||| = {triple:.6g} exceeds the sampled ||V||_B = {rep.b_norm:.6g}')
    logger.info(f'norms: triple={triple:.6g}±{err:.1e} B={rep.b_norm:.6g} B*={bs:.6g} B1/2={half:.6g}')
    return rep
