"""Reference computations of the Born terms W_n f.

Three independent routes: the stationary recursion u <- -R0(|eta|^2 - i eps) V u started from plane
waves, the time-domain integral i int e^{-eps t} e^{itH0} V e^{-itH0} f dt, and the radial wave operator
built from regular solutions and the Jost function on the l = 0 sector.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import integrate, optimize

from waveop.config import config
from waveop.structure import fit_ratio
from waveop.utils.fields import Field3D
from waveop.utils.general import (BoundStateError, BoxError, DomainError, ResolutionError,
                                  parallel_map)
from waveop.utils.quadrature import DirectionSet, composite_gauss_legendre

logger = logging.getLogger(__name__)

SMALL = 1e-6


def _exp_integral(b, D):
    # int_0^D e^{-b r} dr, elementwise
    b = np.asarray(b, dtype=np.complex128)
    z = b * D
    out = np.empty_like(z)
    small = np.abs(z) < SMALL
    out[small] = D * (1 - z[small] / 2 + z[small] ** 2 / 6)
    out[~small] = -np.expm1(-z[~small]) / b[~small]
    return out


def incoming_kappa(rho, eps):
    # root of kappa^2 = rho^2 - i eps with Im kappa >= 0; e^{i kappa r} is the incoming wave
    return -np.sqrt(complex(rho * rho, -eps))


def truncated_green_ft(q, rho, eps, D):
    """Transform of e^{i kappa r}/(4 pi r) 1[r < D] at |xi| = q.

    Equals (1/q) int_0^D e^{-a r} sin(q r) dr with a = -i kappa; finite at q = 0 and on the resonant
    sphere q = rho for every eps >= 0.
    """
    q = np.asarray(q, dtype=np.float64)
    a = -1j * incoming_kappa(rho, eps)
    out = np.empty(q.shape, np.complex128)
    pos = q > 0
    qp = q[pos]
    s = (_exp_integral(a - 1j * qp, D) - _exp_integral(a + 1j * qp, D)) / 2j
    out[pos] = s / qp
    z = a * D
    if abs(z) < SMALL:
        g0 = D * D / 2 * (1 - 2 * z / 3)
    else:
        g0 = (1 - np.exp(-z) * (1 + z)) / (a * a)
    out[~pos] = g0
    return out


def truncated_sinc_ft(q, rho, D):
    """Transform of j0(rho r) 1[r < D], the kernel of the exact angular synthesis on |eta| = rho."""
    q = np.asarray(q, dtype=np.float64)
    out = np.empty(q.shape, np.float64)
    pos = q > 0
    qp = q[pos]

    def S(b):
        return D * np.sinc(b * D / math.pi)

    out[pos] = 2 * math.pi / (rho * qp) * (S(rho - qp) - S(rho + qp))
    out[~pos] = 4 * math.pi / rho * (math.sin(rho * D) / rho ** 2 - D * math.cos(rho * D) / rho)
    return out


@dataclass
class FrequencyRule:
    """Incoming |eta| nodes with weights; `directions` adds an angular product rule for explicit nodes."""

    radii: np.ndarray
    weights: np.ndarray
    band: float
    directions: DirectionSet = None
    kind: str = 'free'
    shells: np.ndarray = None  # integer |k|^2 per node for lattice rules

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError('frequency weights must be positive')
        if np.any(self.radii > self.band):
            raise ResolutionError(f'|eta| up to {self.radii.max():.3g} exceeds the grid band {self.band:.3g}',
                                  suggestion='refine the grid')

    def __len__(self):
        return len(self.radii)

    def nodes(self):
        """(M, 3) nodes eta_m and product weights rho^2 w_rho w_omega."""
        if self.directions is None:
            raise ValueError('rule has no angular part')
        d = self.directions
        eta = self.radii[:, None, None] * d.directions[None]
        w = (self.radii ** 2 * self.weights)[:, None] * d.weights[None]
        return eta.reshape(-1, 3), w.ravel()

    @staticmethod
    def _radial_mass(f):
        F = np.abs(f.fourier()) ** 2
        kx, ky, kz = f.frequencies()
        q = np.sqrt(kx ** 2 + ky ** 2 + kz ** 2).ravel()
        order = np.argsort(q)
        cum = np.cumsum(F.ravel()[order])
        return q[order], cum / cum[-1]

    @classmethod
    def for_field(cls, f, nodes_per_panel=config.FREQ_RADIAL_NODES, panel=None, tol=config.FREQ_MASS_TOL,
                  angular_order=None):
        """Composite Gauss-Legendre in |eta| over the window carrying all but `tol` of |f^|^2."""
        band = math.pi / f.spacing
        q, cum = cls._radial_mass(f)
        lo = q[np.searchsorted(cum, tol)]
        hi = q[min(np.searchsorted(cum, 1 - tol), len(q) - 1)]
        panel = panel or config.FREQ_PANEL_SCALE / f.box
        lo = max(0.0, lo - panel)
        hi = min(band, hi + panel)
        n_panels = max(1, math.ceil((hi - lo) / panel))
        r, w = composite_gauss_legendre(np.linspace(lo, hi, n_panels + 1), nodes_per_panel)
        dirs = DirectionSet.gauss_product(angular_order) if angular_order else None
        logger.debug(f'frequency rule: |eta| in [{lo:.3g}, {hi:.3g}], {len(r)} shells')
        return cls(r, w, band, dirs)

    @classmethod
    def lattice(cls, f, tol=config.FREQ_MASS_TOL):
        """Exact torus rule: one node per occupied integer shell |k|^2 = m."""
        dk = 2 * math.pi / f.box
        k = np.fft.fftfreq(f.n, d=1.0 / f.n)
        kx, ky, kz = np.meshgrid(k, k, k, indexing='ij')
        m = np.rint(kx ** 2 + ky ** 2 + kz ** 2).astype(np.int64).ravel()
        p = np.abs(np.fft.fftn(f.values)).ravel() ** 2
        mass = np.bincount(m, weights=p)
        occupied = np.nonzero(mass > tol * mass.sum())[0]
        radii = dk * np.sqrt(occupied.astype(np.float64))
        return cls(radii, np.ones(len(occupied)), math.sqrt(3) * math.pi / f.spacing, kind='lattice',
                   shells=occupied)


@dataclass
class BornTerms:
    terms: list
    norms: list
    eps: float
    mode: str
    rule: FrequencyRule = None
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self):
        return fit_ratio(self.norms)


class GridConvolver:
    """Aperiodic convolution on the field grid through an extended periodic grid."""

    def __init__(self, f, period, workers=None):
        self.n = f.n
        self.m = max(self.n, sfft.next_fast_len(math.ceil(period / f.spacing)))
        self.workers = workers
        k = 2 * math.pi * np.fft.fftfreq(self.m, d=f.spacing)
        kx, ky, kz = np.meshgrid(k, k, k, indexing='ij', sparse=True)
        self.q = np.sqrt(kx ** 2 + ky ** 2 + kz ** 2)

    def __call__(self, values, multiplier):
        n = self.n
        buf = np.zeros((self.m,) * 3, np.complex128)
        buf[:n, :n, :n] = values
        out = sfft.ifftn(sfft.fftn(buf, workers=self.workers) * multiplier, workers=self.workers)
        return out[:n, :n, :n]


def _potential_on_grid(V, f, tol=config.SUPPORT_TOL):
    grid = f.like(np.asarray(V(f.points())).reshape(f.values.shape))
    if np.any(grid.values):
        grid.support(tol)  # raises BoxError at the edge
    return grid.values


def _plane_synthesis(f, rule, j, points, chunk=4096):
    # (2 pi)^-3 rho^2 sum_omega w f^(rho omega) e^{i rho omega.x} for shell j
    rho = rule.radii[j]
    d = rule.directions
    a = np.abs(f.values).ravel()
    keep = a > config.SUPPORT_TOL * a.max()
    src, fv = f.points()[keep], f.values.ravel()[keep]
    eta = rho * d.directions
    fhat = np.exp(-1j * eta @ src.T) @ fv * f.spacing ** 3
    coef = d.weights * fhat * rho ** 2 / (2 * math.pi) ** 3
    out = np.empty(len(points), np.complex128)
    for s in range(0, len(points), chunk):
        out[s:s + chunk] = np.exp(1j * points[s:s + chunk] @ eta.T) @ coef
    return out.reshape(f.values.shape)


def _zero_terms(f, n, eps, mode):
    return BornTerms([f.like(np.zeros_like(f.values)) for _ in range(n)], [0.0] * n, eps, mode)


def ls_born_iterate(V, f, eps=config.EPS, n=1, rule=None, mode='free', synthesis='exact', tol=None,
                    workers=None):
    """Born terms W_1 f, ..., W_n f from the stationary recursion.

    For each incoming shell |eta| = rho the data restricted to that shell is iterated n times through
    u <- -R0(rho^2 - i eps)(V u), so all directions on a shell share one resolvent application.
    mode='free' uses a truncated Green's function on an extended grid (eps >= 0, no periodic images);
    mode='periodic' uses the torus multiplier 1/(|xi|^2 - rho^2 + i eps) with the exact lattice rule.
    With `tol`, orders after the first whose norm falls below tol * |f| are dropped.
    """
    if n < 1:
        raise ValueError(f'Born order must be >= 1, got {n}')
    if eps < 0:
        raise ValueError(f'eps must be >= 0, got {eps}')
    v = _potential_on_grid(V, f)
    if not np.any(v) or not np.any(f.values):
        return _zero_terms(f, n, eps, mode)
    if mode == 'free':
        acc, rule, meta = _ls_free(v, f, eps, n, rule, synthesis, workers)
    elif mode == 'periodic':
        acc, rule, meta = _ls_periodic(v, f, eps, n, rule, workers)
    else:
        raise ValueError(f'Unknown resolvent mode "{mode}".')
    terms = [f.like(a) for a in acc]
    norms = [t.norm() for t in terms]
    if tol is not None:
        scale = f.norm()
        for i in range(1, len(norms)):
            if norms[i] < tol * scale:
                terms, norms = terms[:i + 1], norms[:i + 1]
                break
    logger.info(f'LS {mode}: eps={eps:g}, {len(rule)} shells, |W_n f| = ' + ', '.join(f'{x:.3e}' for x in norms))
    return BornTerms(terms, norms, eps, mode, rule, meta)


def _ls_free(v, f, eps, n, rule, synthesis, workers):
    rule = rule or FrequencyRule.for_field(f, angular_order=config.FREQ_ANGULAR_ORDER
                                           if synthesis == 'nodes' else None)
    if synthesis == 'nodes' and rule.directions is None:
        raise ValueError('node synthesis needs a rule with directions')
    pts = f.points()
    vmask = (np.abs(v) > config.SUPPORT_TOL * np.abs(v).max()).ravel()
    r_v = float(np.linalg.norm(pts[vmask], axis=1).max()) + f.spacing
    half_diag = float(np.linalg.norm(pts, axis=1).max())
    center, r_f = f.support()
    D = r_v + half_diag + f.spacing
    D_f = r_v + float(np.linalg.norm(center)) + r_f + f.spacing
    period = D + 0.5 * f.box + r_v
    conv = GridConvolver(f, period)
    meta = {'D': D, 'D_f': D_f, 'extended_n': conv.m}
    logger.debug(f'free resolvent: D={D:.3g}, extended grid {conv.m}^3')

    def shell(j):
        rho, w = rule.radii[j], rule.weights[j]
        if synthesis == 'exact':
            u = conv(f.values, truncated_sinc_ft(conv.q, rho, D_f)) * (4 * math.pi * rho ** 2 / (2 * math.pi) ** 3)
        else:
            u = _plane_synthesis(f, rule, j, pts)
        g = truncated_green_ft(conv.q, rho, eps, D)
        out = []
        for _ in range(n):
            u = -conv(v * u, g)
            out.append(w * u)
        return out

    acc = [np.zeros_like(f.values) for _ in range(n)]
    for res in parallel_map(shell, range(len(rule)), workers):
        for a, r in zip(acc, res):
            a += r
    return acc, rule, meta


def _ls_periodic(v, f, eps, n, rule, workers):
    dk2 = (2 * math.pi / f.box) ** 2
    if eps < 0.25 * dk2:
        raise ResolutionError(f'eps={eps:g} is below the lattice spacing of |xi|^2 ({dk2:.3g}/4)',
                              tolerance=0.25 * dk2, suggestion='raise eps or enlarge the box')
    rule = rule or FrequencyRule.lattice(f)
    if rule.kind != 'lattice':
        raise ValueError('periodic mode needs a lattice rule')
    kx, ky, kz = f.frequencies()
    k2 = kx ** 2 + ky ** 2 + kz ** 2
    k = np.fft.fftfreq(f.n, d=1.0 / f.n)
    ix, iy, iz = np.meshgrid(k, k, k, indexing='ij')
    m_int = np.rint(ix ** 2 + iy ** 2 + iz ** 2).astype(np.int64)
    F = np.fft.fftn(f.values)

    def shell(j):
        m, rho = rule.shells[j], rule.radii[j]
        return periodic_chain(v, np.fft.ifftn(np.where(m_int == m, F, 0)), k2, rho, eps, n)

    acc = [np.zeros_like(f.values) for _ in range(n)]
    for res in parallel_map(shell, range(len(rule)), workers):
        for a, r in zip(acc, res):
            a += r
    return acc, rule, {}


def periodic_chain(v, u, k2, rho, eps, n):
    """Iterates u_1..u_n of u <- -R0(rho^2 - i eps)(v u) with the torus multiplier."""
    mult = 1.0 / (k2 - rho * rho + 1j * eps)
    out = []
    for _ in range(n):
        u = -np.fft.ifftn(np.fft.fftn(v * u) * mult)
        out.append(u)
    return out


def duhamel_time(V, f, eps=config.EPS, t_max=None, dt=config.DUHAMEL_DT, horizon_tol=config.DUHAMEL_HORIZON_TOL,
                 check_box=True, buffer_tol=config.BUFFER_MASS_TOL, workers=None):
    """First Born term i int_0^t_max e^{-eps t} e^{itH0} V e^{-itH0} f dt on the periodic grid.

    Free steps are exact FFT multipliers; the t integral is composite Simpson. With check_box, the free
    wave must not reach the box buffer while e^{-eps t} is above horizon_tol (wrap-around).
    """
    if eps <= 0:
        raise ValueError(f'time-domain integral needs eps > 0, got {eps}')
    t_max = t_max if t_max is not None else math.log(1.0 / horizon_tol) / eps
    if math.exp(-eps * t_max) > horizon_tol:
        raise ResolutionError(f'horizon e^(-eps t_max) = {math.exp(-eps * t_max):.3g} above {horizon_tol:g}',
                              tolerance=horizon_tol, suggestion=f't_max >= {math.log(1 / horizon_tol) / eps:.4g}')
    v = _potential_on_grid(V, f)
    if not np.any(v) or not np.any(f.values):
        return f.like(np.zeros_like(f.values))
    steps = 2 * math.ceil(t_max / (2 * dt))
    dt = t_max / steps
    w = np.full(steps + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    w *= dt / 3
    kx, ky, kz = f.frequencies()
    k2 = kx ** 2 + ky ** 2 + kz ** 2
    fwd = np.exp(-1j * dt * k2)
    F = sfft.fftn(f.values, workers=workers)
    Ft = F.copy()  # e^{-itH0} f in Fourier space
    back = np.ones_like(k2, dtype=np.complex128)  # e^{itH0}
    back_step = np.conj(fwd)
    acc = np.zeros_like(F)
    for i in range(steps + 1):
        t = i * dt
        damp = math.exp(-eps * t)
        psi = sfft.ifftn(Ft, workers=workers)
        if check_box and i % 10 == 0 and damp > horizon_tol:
            mass = f.like(psi).boundary_mass()
            if mass > buffer_tol:
                raise BoxError(f'free wave reached the box buffer at t={t:.3g} ({mass:.2g} of the mass)',
                               tolerance=buffer_tol, suggestion='enlarge the box or raise eps')
        acc += (w[i] * damp) * back * sfft.fftn(v * psi, workers=workers)
        Ft *= fwd
        back *= back_step
    logger.info(f'Duhamel: eps={eps:g}, t_max={t_max:.4g}, {steps} Simpson steps')
    return f.like(1j * sfft.ifftn(acc, workers=workers))


def richardson_eps(fn, eps):
    """eps -> 0 extrapolation 2 F(eps/2) - F(eps) under a first-order bias, with the halving ratio.

    fn maps eps to a Field3D. Returns (extrapolated field, ratio |F(eps) - F(eps/2)| / |F(eps/2) - F(eps/4)|).
    """
    a, b, c = fn(eps), fn(eps / 2), fn(eps / 4)
    d1 = (a.values - b.values)
    d2 = (b.values - c.values)
    n2 = np.linalg.norm(d2)
    ratio = float(np.linalg.norm(d1) / n2) if n2 > 0 else math.inf
    logger.info(f'eps halving: ratio of differences {ratio:.3f}')
    return a.like(2 * b.values - a.values), ratio


@dataclass
class RadialProfile:
    """Radial function samples f(r) on a uniform grid starting at r = 0."""

    r: np.ndarray
    values: np.ndarray

    def norm(self):
        # L2(R^3) norm of the radial function
        return float(math.sqrt(4 * math.pi * integrate.trapezoid(np.abs(self.values) ** 2 * self.r ** 2, self.r)))

    def __sub__(self, other):
        return RadialProfile(self.r, self.values - other.values)

    def __add__(self, other):
        return RadialProfile(self.r, self.values + other.values)


@dataclass
class RadialScatteringData:
    k: np.ndarray
    r: np.ndarray
    phi: np.ndarray  # (K, R) regular solutions, or None
    jost: np.ndarray
    delta: np.ndarray
    wronskian_error: float


def _radial_profile_fn(V):
    if not getattr(V, 'radial', False):
        raise DomainError(f'{V.kind} potential is not radial', suggestion='use a radial potential family')
    return V.profile


def radial_grid(V, f_scale=1.0, r_max=None, dr=None, k_max=None):
    """Uniform r grid resolving k_max with r_max covering both length scales."""
    ell = max(V.length_scale, f_scale)
    r_max = r_max or config.JOST_R_MAX * ell
    k_max = k_max or config.K_MAX / f_scale
    dr = dr or min(config.JOST_DR_SCALE * ell, math.pi / (8 * k_max))
    return np.linspace(0.0, r_max, int(math.ceil(r_max / dr)) + 1)


def radial_scattering(V, k, r=None, keep_solutions=False, rtol=config.JOST_RTOL):
    """Regular solutions of -u'' + V u = k^2 u, u(0) = 0, u'(0) = 1, Jost values and phase shifts.

    All k are integrated as one vectorized system together with the companion solution chi(0) = 1,
    chi'(0) = 0; the Wronskian phi chi' - phi' chi = -1 is monitored along r.
    """
    prof = _radial_profile_fn(V)
    k = np.asarray(k, dtype=np.float64)
    r = radial_grid(V) if r is None else np.asarray(r, dtype=np.float64)
    K = len(k)
    k2 = k * k

    def rhs(x, y):
        y = y.reshape(4, K)
        q = float(prof(x)) - k2
        return np.concatenate([y[1], q * y[0], y[3], q * y[2]])

    y0 = np.concatenate([np.zeros(K), np.ones(K), np.ones(K), np.zeros(K)])
    sol = integrate.solve_ivp(rhs, (r[0], r[-1]), y0, method='DOP853', t_eval=r, rtol=rtol,
                              atol=rtol * 1e-2)
    if not sol.success:
        raise ResolutionError(f'radial integration failed: {sol.message}', suggestion='loosen rtol or shrink r_max')
    y = sol.y.reshape(4, K, -1)
    phi, dphi, chi, dchi = y
    wr = float(np.max(np.abs(phi * dchi - dphi * chi + 1.0)))
    R = r[-1]
    ks = np.where(k > 0, k, 1.0)
    A = phi[:, -1] * np.sin(ks * R) + dphi[:, -1] * np.cos(ks * R) / ks
    B = phi[:, -1] * np.cos(ks * R) - dphi[:, -1] * np.sin(ks * R) / ks
    delta = np.arctan2(B, A)
    jost = ks * np.hypot(A, B) * np.exp(-1j * delta)
    zero = k == 0
    jost[zero] = dphi[zero, -1]
    delta[zero] = 0.0
    delta = np.unwrap(delta)
    if len(delta):
        delta -= 2 * math.pi * np.round(delta[-1] / (2 * math.pi))
    logger.debug(f'radial scattering: {K} momenta, Wronskian drift {wr:.2e}')
    return RadialScatteringData(k, r, phi if keep_solutions else None, jost, delta, wr)


@dataclass
class JostZeroReport:
    kappa: np.ndarray
    values: np.ndarray  # F(i kappa), real
    nodes: int  # zeros of the zero-energy regular solution
    bound_state: bool


def jost_zero_check(V, kappa_max=None, n=64, r_max=None, rtol=1e-9):
    """Sign of F(i kappa) on the positive imaginary axis and the zero-energy node count.

    F(i kappa) = lim e^{-kappa r}(phi' + kappa phi); integrated in the scaled variable y = e^{-kappa r} phi
    so large kappa r stays finite. F(i inf) = 1; any sign change or a node at zero energy means a bound
    state.
    """
    prof = _radial_profile_fn(V)
    ell = V.length_scale
    kappa_max = kappa_max or 20.0 / ell
    r_max = r_max or config.JOST_R_MAX * ell
    kappa = np.linspace(0.0, kappa_max, n)

    def rhs(x, y):
        y = y.reshape(2, n)
        return np.concatenate([y[1], float(prof(x)) * y[0] - 2 * kappa * y[1]])

    y0 = np.concatenate([np.zeros(n), np.ones(n)])
    r = np.linspace(0.0, r_max, 4001)
    sol = integrate.solve_ivp(rhs, (0.0, r_max), y0, method='DOP853', t_eval=r, rtol=rtol, atol=rtol * 1e-3)
    y, dy = sol.y.reshape(2, n, -1)
    values = dy[:, -1] + 2 * kappa * y[:, -1]
    phi0 = y[0]
    nodes = int(np.count_nonzero(np.diff(np.sign(phi0[1:])) != 0))
    slope, val = dy[0, -1], phi0[-1]
    if slope * val < 0:
        nodes += 1  # the linear tail a r + b crosses zero beyond r_max
    bound = bool(np.any(values <= 0) or nodes > 0)
    return JostZeroReport(kappa, values, nodes, bound)


def _profile_values(f, r):
    return np.asarray(f(r) if callable(f) else f, dtype=np.complex128)


def _sine_transform(u, r, k):
    # u~(k) = int_0^inf sin(k r) u(r) dr
    return integrate.trapezoid(np.sin(np.outer(k, r)) * u[None, :], r, axis=1)


def _momenta(f_scale, k_max=None, n=config.K_POINTS):
    k_max = k_max or config.K_MAX / f_scale
    return np.linspace(0.0, k_max, n)


def jost_wave_operator(V, f, k=None, r=None, f_scale=1.0, sign=config.JOST_PHASE_SIGN, check_bound=True):
    """W+ f on radial data through the l = 0 distorted transform.

    psi_k = k phi(r, k)/|F(k)| ~ sin(k r + delta); W+ u = (2/pi) int e^{i sign delta} psi_k u~(k) dk with
    u = r f. `f` is a callable of r or samples on `r`.
    """
    r = radial_grid(V, f_scale) if r is None else np.asarray(r, dtype=np.float64)
    k = _momenta(f_scale) if k is None else np.asarray(k, dtype=np.float64)
    if check_bound:
        rep = jost_zero_check(V)
        if rep.bound_state:
            raise BoundStateError(f'potential binds ({rep.nodes} zero-energy nodes)',
                                  suggestion='lower the coupling below the gate threshold')
    u = r * _profile_values(f, r)
    ut = _sine_transform(u, r, k)
    data = radial_scattering(V, k, r, keep_solutions=True)
    absF = np.abs(data.jost)
    scale = np.where(absF > 0, k / np.where(absF > 0, absF, 1.0), 0.0)
    psi = data.phi * scale[:, None]
    coef = np.exp(1j * sign * data.delta) * ut
    wu = 2 / math.pi * integrate.trapezoid(psi * coef[:, None], k, axis=0)
    return RadialProfile(r, _divide_r(wu, r)), data


def _divide_r(wu, r):
    out = np.empty_like(wu)
    out[1:] = wu[1:] / r[1:]
    out[0] = out[1]
    return out


def radial_born_terms(V, f, n=2, k=None, r=None, f_scale=1.0, sign=config.JOST_PHASE_SIGN):
    """Radial Born terms W_1 f .. W_n f from psi_j = -int G(r, r') V psi_{j-1} dr', psi_0 = sin(k r).

    G(r, r') = sin(k r_<) e^{i sign k r_>}/k is the half-line resolvent matching the phase sign.
    """
    prof = _radial_profile_fn(V)
    r = radial_grid(V, f_scale) if r is None else np.asarray(r, dtype=np.float64)
    k = _momenta(f_scale) if k is None else np.asarray(k, dtype=np.float64)
    k = k[k > 0]
    u = r * _profile_values(f, r)
    ut = _sine_transform(u, r, k)
    vr = prof(r)
    kr = np.outer(k, r)
    s, e = np.sin(kr), np.exp(1j * sign * kr)
    psi = s.astype(np.complex128)
    out = []
    for _ in range(n):
        h = vr[None, :] * psi
        inner = integrate.cumulative_trapezoid(s * h, r, axis=1, initial=0)
        outer_c = integrate.cumulative_trapezoid(e * h, r, axis=1, initial=0)
        outer = outer_c[:, -1:] - outer_c
        psi = -(e * inner + s * outer) / k[:, None]
        wu = 2 / math.pi * integrate.trapezoid(psi * ut[:, None], k, axis=0)
        out.append(RadialProfile(r, _divide_r(wu, r)))
    return out


def calibrate_jost_phase(V, f, f_scale=1.0):
    """Phase sign for which W+ f - f matches the first radial Born term; residuals per sign."""
    r = radial_grid(V, f_scale)
    f0 = RadialProfile(r, _profile_values(f, r))
    res = {}
    for sign in (1, -1):
        w1 = radial_born_terms(V, f, 1, r=r, f_scale=f_scale, sign=sign)[0]
        wj, _ = jost_wave_operator(V, f, r=r, f_scale=f_scale, sign=sign, check_bound=False)
        res[sign] = (wj - f0 - w1).norm() / max(w1.norm(), 1e-300)
    best = min(res, key=res.get)
    logger.info(f'Jost phase calibration: sign {best:+d}, residuals {res}')
    return best, res


def born_ratio(V, f=None, n=4, f_scale=None, **ls_kwargs):
    """Contraction ratio of the Born series: geometric fit of |W_j f| for j <= n.

    Radial potentials use the radial terms with a radial gaussian probe; others use the stationary oracle
    with `f` a Field3D.
    """
    if getattr(V, 'radial', False) and not isinstance(f, Field3D):
        f_scale = f_scale or V.length_scale
        probe = f if f is not None else (lambda r: np.exp(-0.5 * (r / f_scale) ** 2))
        terms = radial_born_terms(V, probe, n, f_scale=f_scale)
        return fit_ratio([t.norm() for t in terms])
    if f is None:
        raise ValueError('a Field3D probe is needed for non-radial potentials')
    return ls_born_iterate(V, f, n=n, **ls_kwargs).ratio


def critical_coupling(family, target=config.BORN_RATIO_TARGET, g0=1.0, f=None, xtol=1e-4, max_doublings=40):
    """Coupling g with born_ratio(family(g)) = target, by doubling to a bracket and brentq."""
    def gap(g):
        return born_ratio(family(g), f) - target

    lo = hi = g0
    for _ in range(max_doublings):
        if gap(hi) >= 0:
            break
        hi *= 2
    else:
        raise ResolutionError('no coupling reaches the target ratio', suggestion='check the family')
    lo = hi / 2
    for _ in range(max_doublings):
        if gap(lo) < 0:
            break
        lo /= 2
    g = optimize.brentq(gap, lo, hi, xtol=xtol * hi)
    logger.info(f'critical coupling for ratio {target}: g = {g:.6g}')
    return g
