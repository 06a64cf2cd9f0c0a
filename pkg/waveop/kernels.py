"""Fourier-side T-kernels, their composition and the Z/X norms.

T_1(x0, x1, eta) = e^{-i x1.eta} R0(|eta|^2 - i eps)(x0, x1) V(x0) e^{i x0.eta} with
R0(z)(x0, x1) = e^{i sqrt(z) |x0 - x1|}/(4 pi |x0 - x1|), Im sqrt(z) > 0. Higher orders follow from
T_n(x0, x_n) = e^{i (x0 - x_n).eta} V(x0) c_n(x0, x_n), c_n the symmetric kernel of (R0 V)^{n-1} R0.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from waveop.config import config
from waveop.lfun import LProfile, compute_L, plane_basis, triple_norm
from waveop.norms import b_norm
from waveop.oracles import GridConvolver, incoming_kappa, truncated_green_ft
from waveop.potentials import GaussianPotential, GridPotential
from waveop.structure import W1Kernel
from waveop.utils.fields import Field3D
from waveop.utils.general import AccuracyError, GateError, SingularPointError, parallel_map
from waveop.utils.quadrature import DirectionSet, composite_gauss_legendre, gauss_legendre

logger = logging.getLogger(__name__)


def _quad_half(V, tol=1e-8):
    return min(V.support_radius(tol), config.KERNEL_BOX_SCALE * V.length_scale)


def resolvent_kernel(kappa, r):
    """e^{i kappa r}/(4 pi r)."""
    r = np.asarray(r, dtype=np.float64)
    return np.exp(1j * kappa * r) / (4 * math.pi * r)


def t1_fourier(s, x0, x1, eta):
    """Closed-form order-1 kernel; x0 and x1 broadcast against each other."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    r = np.linalg.norm(x0 - x1, axis=-1)
    if np.any(r == 0):
        raise SingularPointError('T1 evaluated at x0 = x1', suggestion='offset the sample points')
    kappa = incoming_kappa(float(np.linalg.norm(eta)), s.eps)
    phase = np.exp(1j * ((x0 - x1) @ eta))
    return phase * resolvent_kernel(kappa, r) * s.V(x0)


class ResolventChain:
    """c_1 = R0(., b), c_k = R0 (V c_{k-1}) on a grid around the potential, for one base point b and eta.

    c_2 splits off V(b) R0(., b) e^{-beta |. - b|} = V(b) R0'(., b) (R0' the resolvent at kappa + i beta),
    whose convolution with R0 is (R0 - R0')/(kappa^2 - kappa'^2) by the resolvent identity; the remainder
    vanishes at b and is convolved on the grid. Later orders are plain grid convolutions.
    """

    def __init__(self, V, base, eta, eps, grid_n=config.KERNEL_CHAIN_N, half=None):
        self.base = np.asarray(base, dtype=np.float64)
        half = half or _quad_half(V)
        self.grid = Field3D.centered(grid_n, 2 * half)
        rho = float(np.linalg.norm(eta))
        self.kappa = incoming_kappa(rho, eps)
        self.kappa_d = self.kappa + 1j * config.CHAIN_DAMP_SCALE / V.length_scale
        self.vb = complex(V(self.base))
        pts = self.grid.points()
        self.v = np.asarray(V(pts)).reshape(self.grid.values.shape)
        D = 2 * math.sqrt(3) * half + self.grid.spacing
        self.conv = GridConvolver(self.grid, D + 2 * half)
        self.green = truncated_green_ft(self.conv.q, rho, eps, D)
        r = np.linalg.norm(pts - self.base, axis=-1).reshape(self.grid.values.shape)
        beta = config.CHAIN_DAMP_SCALE / V.length_scale
        with np.errstate(divide='ignore', invalid='ignore'):
            src = (self.v - self.vb * np.exp(-beta * r)) * resolvent_kernel(self.kappa, r)
        src[r == 0] = 0.0
        self._r = r
        self._smooth = {2: self.conv(src, self.green)}
        self._grid_values = {}

    def _closed2(self, r):
        k, kd = self.kappa, self.kappa_d
        r = np.asarray(r, dtype=np.float64)
        out = np.empty(r.shape, np.complex128)
        pos = r > 0
        rp = r[pos]
        out[pos] = (np.exp(1j * k * rp) - np.exp(1j * kd * rp)) / (4 * math.pi * rp)
        out[~pos] = 1j * (k - kd) / (4 * math.pi)
        return self.vb * out / (k * k - kd * kd)

    def _on_grid(self, k):
        if k not in self._grid_values:
            if k == 2:
                vals = self._closed2(self._r) + self._smooth[2]
            else:
                prev = self._on_grid(k - 1)
                self._smooth[k] = self.conv(self.v * prev, self.green)
                vals = self._smooth[k]
            self._grid_values[k] = vals
        return self._grid_values[k]

    def evaluate(self, k, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        r = np.linalg.norm(points - self.base, axis=-1)
        if k == 1:
            if np.any(r == 0):
                raise SingularPointError('R0 evaluated at its pole', suggestion='offset the sample points')
            return resolvent_kernel(self.kappa, r)
        self._on_grid(k)
        smooth = self.grid.like(self._smooth[k]).sample(points, method='cubic')
        return smooth + self._closed2(r) if k == 2 else smooth


class TKernelSampler:
    """Evaluator of F_y T_n(x0, x1, eta); one of x0, x1 is a single point, the other may be an array."""

    def __init__(self, V, eps=config.EPS, order=1, grid_n=config.KERNEL_CHAIN_N, cache=None):
        if eps <= 0:
            raise ValueError(f'T-kernels need eps > 0, got {eps}')
        if order < 1:
            raise ValueError(f'kernel order must be >= 1, got {order}')
        self.V, self.eps, self.order, self.grid_n = V, float(eps), int(order), grid_n
        self.cache = {} if cache is None else cache

    def chain(self, base, eta):
        key = (tuple(np.round(base, 12)), tuple(np.round(eta, 12)), self.eps)
        if key not in self.cache:
            self.cache[key] = ResolventChain(self.V, base, eta, self.eps, self.grid_n)
        return self.cache[key]

    def __call__(self, x0, x1, eta):
        if self.order == 1:
            return t1_fourier(self, x0, x1, eta)
        x0 = np.asarray(x0, dtype=np.float64)
        x1 = np.asarray(x1, dtype=np.float64)
        eta = np.asarray(eta, dtype=np.float64)
        if x1.ndim == 1:
            c = self.chain(x1, eta).evaluate(self.order, x0)
        elif x0.ndim == 1:
            c = self.chain(x0, eta).evaluate(self.order, x1)  # c_n is symmetric
        else:
            raise ValueError('one endpoint must be a single point')
        phase = np.exp(1j * ((x0 - x1) @ eta))
        return phase * self.V(x0) * c.reshape(np.broadcast_shapes(x0.shape[:-1], x1.shape[:-1]))

    def with_order(self, order):
        return TKernelSampler(self.V, self.eps, order, self.grid_n, self.cache)


class KernelSum:
    """Linear combination sum_i c_i T_i of samplers."""

    def __init__(self, samplers, coefs):
        self.samplers, self.coefs = list(samplers), list(coefs)

    def __call__(self, x0, x1, eta):
        return sum(c * s(x0, x1, eta) for s, c in zip(self.samplers, self.coefs))


def _smooth_step(s):
    # C-infinity step: 0 for s <= 0, 1 for s >= 1
    s = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
    with np.errstate(divide='ignore', over='ignore'):
        a = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)
    return a / (a + b)


def cutoff(t):
    """1 on t <= 1/2, 0 on t >= 1, smooth between."""
    return 1.0 - _smooth_step(2.0 * np.asarray(t) - 1.0)


@dataclass
class QuadratureBox:
    """Midpoint cube [-half, half]^3 plus polar balls of radius polar_cells * h around singular points."""

    half: float
    n: int = config.KERNEL_QUAD_N
    polar_cells: float = config.POLAR_RADIUS_CELLS
    radial_n: int = config.POLAR_RADIAL_N
    angular_order: int = config.POLAR_ANGULAR_ORDER

    @classmethod
    def for_potential(cls, V, n=config.KERNEL_QUAD_N, **kwargs):
        return cls(_quad_half(V), n, **kwargs)

    @property
    def h(self):
        return 2 * self.half / self.n

    @property
    def radius(self):
        return self.polar_cells * self.h

    def grid(self):
        x = -self.half + self.h * (np.arange(self.n) + 0.5)
        g = np.stack(np.meshgrid(x, x, x, indexing='ij'), axis=-1).reshape(-1, 3)
        return g, np.full(len(g), self.h ** 3)

    def polar(self, center, refine=1):
        r, wr = gauss_legendre(self.radial_n * refine, 0.0, self.radius)
        d = DirectionSet.gauss_product(self.angular_order * refine)
        pts = center + r[:, None, None] * d.directions[None]
        w = (wr * r ** 2)[:, None] * d.weights[None]
        return pts.reshape(-1, 3), w.ravel()


def compose(sA, sB, x0, x2, eta, box, check=True, tol=config.COMPOSE_TOL):
    """(A * B)(x0, x2, eta) = int A(x0, x1, eta) B(x1, x2, eta) dx1.

    A smooth partition of unity separates the two poles: polar balls carry chi_0 and chi_2 (1 - chi_0),
    the cube carries the rest. With check, the polar parts are recomputed at twice the order and an
    AccuracyError is raised when they move the result by more than tol.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    rho = box.radius

    def integrand(y):
        return sA(x0, y, eta) * sB(y, x2, eta)

    def weights(p):
        c0 = cutoff(np.linalg.norm(p - x0, axis=-1) / rho)
        c2 = cutoff(np.linalg.norm(p - x2, axis=-1) / rho)
        return c0, c2

    g, w = box.grid()
    c0, c2 = weights(g)
    wo = w * (1 - c0) * (1 - c2)
    keep = wo > 0
    outer = complex(integrand(g[keep]) @ wo[keep])

    def polar(refine):
        total = 0.0
        for first, center in ((True, x0), (False, x2)):
            p, pw = box.polar(center, refine)
            a0, a2 = weights(p)
            wp = pw * (a0 if first else a2 * (1 - a0))
            sel = wp > 0
            total += complex(integrand(p[sel]) @ wp[sel])
        return total

    inner = polar(1)
    if check:
        fine = polar(2)
        scale = max(abs(outer + fine), 1e-300)
        if abs(fine - inner) > tol * scale:
            raise AccuracyError(f'polar refinement moved the composition by {abs(fine - inner) / scale:.2e}',
                                residual=abs(fine - inner) / scale, tolerance=tol,
                                suggestion='raise the quadrature resolution (n, polar_cells)')
        inner = fine
    return outer + inner


def direct_chain_t2(V, eps, x0, x2, eta, nodes=config.PROLATE_NODES):
    """T_2 from int R0(x0, y) V(y) R0(y, x2) dy in prolate spheroidal coordinates with foci x0, x2.

    With mu = cosh t, nu = cos theta the volume element (d/2) |y - x0| |y - x2| cancels both poles, so the
    integrand (d/2) e^{i kappa d mu} V(y)/(16 pi^2) sinh t sin theta is smooth.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    d = float(np.linalg.norm(x2 - x0))
    if d < 1e-12:
        raise SingularPointError('prolate coordinates need x0 != x2', suggestion='offset the sample points')
    e = (x2 - x0) / d
    a, b = plane_basis(e)
    c = 0.5 * (x0 + x2)
    kappa = incoming_kappa(float(np.linalg.norm(eta)), eps)
    ell = V.length_scale
    R = _quad_half(V)
    mu_max = max(1.0 + 1e-9, (2 * R + np.linalg.norm(x0) + np.linalg.norm(x2)) / d)
    t_max = math.acosh(mu_max)
    panels = int(min(128, max(4, math.ceil(0.5 * d * mu_max / (0.5 * ell)))))
    n_t, n_th, n_ph = nodes
    t, wt = composite_gauss_legendre(np.linspace(0.0, t_max, panels + 1), n_t)
    th, wth = gauss_legendre(n_th, 0.0, math.pi)
    ph = 2 * math.pi * np.arange(n_ph) / n_ph
    wph = 2 * math.pi / n_ph
    nu, snu = np.cos(th), np.sin(th)
    ring = np.cos(ph)[:, None] * a + np.sin(ph)[:, None] * b  # (P, 3)
    total = 0.0
    for ti, wi in zip(t, wt):
        mu, smu = math.cosh(ti), math.sinh(ti)
        y = (c + 0.5 * d * (mu * nu[:, None, None] * e
                            + (smu * snu)[:, None, None] * ring[None]))  # (T, P, 3)
        vals = V(y.reshape(-1, 3)).reshape(len(th), len(ph))
        total += wi * smu * np.exp(1j * kappa * d * mu) * complex((wth * snu) @ vals.sum(axis=1))
    integral = 0.5 * d * total * wph / (16 * math.pi ** 2)
    return np.exp(1j * ((x0 - x2) @ eta)) * complex(V(x0)) * integral


def kernel_samples(V, n=config.KERNEL_SAMPLES, seed=config.SEED):
    """Random (x0, x2, eta) triples around the potential's mass, |eta| in [0.5, 2] / length scale."""
    rng = np.random.default_rng(seed)
    ell = V.length_scale
    x0 = rng.normal(scale=0.6 * ell, size=(n, 3))
    x2 = rng.normal(scale=0.6 * ell, size=(n, 3))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    eta = d * rng.uniform(0.5, 2.0, size=(n, 1)) / ell
    return list(zip(x0, x2, eta))


@dataclass
class ZNorm:
    value: float  # sampled lower estimate of the sup
    argmax: tuple
    values: list = field(default_factory=list)


def _x0_integral(s, x1, eta, box):
    g, w = box.grid()
    if s.order > 1:
        return float(np.abs(s(g, x1, eta)) @ w)
    c = cutoff(np.linalg.norm(g - x1, axis=-1) / box.radius)
    wo = w * (1 - c)
    keep = wo > 0
    total = float(np.abs(s(g[keep], x1, eta)) @ wo[keep])
    p, pw = box.polar(np.asarray(x1, dtype=np.float64))
    cp = cutoff(np.linalg.norm(p - x1, axis=-1) / box.radius)
    sel = cp > 0
    return total + float(np.abs(s(p[sel], x1, eta)) @ (pw * cp)[sel])


def z_norm(s, eta_samples, x1_samples=None, box=None, workers=None):
    """max over sampled (eta, x1) of int |T(x0, x1, eta)| dx0; seeded at the origin."""
    box = box or QuadratureBox.for_potential(s.V)
    x1s = [np.zeros(3)] + [np.asarray(x, dtype=np.float64) for x in (x1_samples or [])]
    jobs = [(np.asarray(e, dtype=np.float64), x) for e in eta_samples for x in x1s]
    vals = parallel_map(lambda job: _x0_integral(s, job[1], job[0], box), jobs, workers)
    i = int(np.argmax(vals))
    logger.debug(f'Z norm (order {s.order}): {vals[i]:.6g} over {len(jobs)} samples')
    return ZNorm(float(vals[i]), (jobs[i][0].tolist(), jobs[i][1].tolist()), vals)


def _coarse_view(L, order):
    """Rows of L nearest to a coarse direction set, reweighted by it."""
    coarse = DirectionSet.gauss_product(order)
    if len(L.dirs) <= len(coarse):
        return L
    rows = np.argmax(coarse.directions @ L.dirs.directions.T, axis=1)
    return LProfile(L.r, L.values[rows], coarse, L.tail_mass[rows], L.tail_bound, dict(L.provenance))


def key_integral(v, L, t_n=config.KEY_T_N, omega_order=config.KEY_OMEGA_ORDER, l_order=config.KEY_L_ORDER,
                 grid_n=config.U_GRID, workers=None, **l_kwargs):
    """int_{S^2} int_0^inf |||v(.) L(t - 2 omega.(.), omega)||| dt d omega.

    t = ell u/(1 - u) maps [0, inf) onto [0, 1), where the r^-2 decay of L keeps the integrand bounded.
    """
    L = _coarse_view(L, omega_order)
    ell = v.length_scale
    R = min(v.support_radius(1e-8), config.U_BOX_SCALE * ell)
    box = Field3D.centered(grid_n, 2 * R)
    xp = box.points()
    vx = v(xp)
    u, wu = gauss_legendre(t_n, 0.0, 1.0)
    t = ell * u / (1 - u)
    wt = wu * ell / (1 - u) ** 2
    dirs = DirectionSet.gauss_product(l_order)
    jobs = [(ti, wi, j) for ti, wi in zip(t, wt) for j in range(len(L.dirs))]

    def term(job):
        ti, wi, j = job
        mod = L.evaluate(ti - 2.0 * (xp @ L.dirs.directions[j]), rows=[j])[0]
        U = GridPotential(box.like((mod * vx).reshape(box.values.shape)))
        return wi * L.dirs.weights[j] * triple_norm(compute_L(U, dirs, workers=1, **l_kwargs))

    return float(sum(parallel_map(term, jobs, workers)))


def x_norm(K, v, x_samples=None, b=None, workers=None, **key_kwargs):
    """||v||_B sup_x int |K(x, y)| dy + int ||v(x) K(x, y)||_B dy, the second through the polar reduction.

    K is a W1Kernel; the sup over x is sampled at the origin and `x_samples`.
    """
    b = b_norm(v, workers=workers) if b is None else b
    xs = [np.zeros(3)] + [np.asarray(x, dtype=np.float64) for x in (x_samples or [])]
    sup = max(K.linf_l1(x) for x in xs)
    key = abs(K.constant) * key_integral(v, K.L, workers=workers, **key_kwargs)
    return b * sup + key


@dataclass
class KeyEstimate:
    lhs: list
    rhs: list
    constants: list
    labels: list

    @property
    def spread(self):
        c = [x for x in self.constants if x > 0]
        return max(c) / min(c) if c else math.inf


def key_estimate(pairs, dirs=None, labels=None, workers=None, **key_kwargs):
    """Left side int int |||v L_V(t - 2 omega.x, omega)||| against ||v||_B |||V||| over (v, V) pairs."""
    dirs = dirs or DirectionSet.gauss_product(config.KEY_OMEGA_ORDER)
    lhs, rhs, consts = [], [], []
    for v, V in pairs:
        L = compute_L(V, dirs, workers=workers)
        a = key_integral(v, L, workers=workers, **key_kwargs)
        full = compute_L(V, DirectionSet.gauss_product(), workers=workers)
        r = b_norm(v, workers=workers) * triple_norm(full)
        lhs.append(a)
        rhs.append(r)
        consts.append(a / r if r > 0 else math.nan)
        logger.info(f'key estimate {v!r} / {V!r}: lhs {a:.4g}, rhs {r:.4g}, C {consts[-1]:.4g}')
    return KeyEstimate(lhs, rhs, consts, labels or [f'{v!r}|{V!r}' for v, V in pairs])


def weighted_potential(phi, V, grid_n=config.U_GRID):
    """The product phi V; closed form for two centered gaussians, a grid potential otherwise."""
    if isinstance(phi, GaussianPotential) and isinstance(V, GaussianPotential):
        width = (phi.sigma ** -2 + V.sigma ** -2) ** -0.5
        return GaussianPotential(phi.a * V.a, width)
    R = min(V.support_radius(1e-8), config.U_BOX_SCALE * V.length_scale)
    box = Field3D.centered(grid_n, 2 * R)
    return GridPotential(box.like((phi(box.points()) * V(box.points())).reshape(box.values.shape)))


def y_norm_ingredients(V, eps=config.EPS, dictionary=None, eta_samples=None, workers=None, **key_kwargs):
    """The Z norm of T_1 and X norms of the dictionary-weighted kernels f K_1 with v = V.

    Dictionary functions are gaussian bumps restricted to the support of V, and ||f||_{V^-1 B} is taken
    as ||f V||_B.
    """
    ell = V.length_scale
    dictionary = dictionary or [GaussianPotential(1.0, w * ell) for w in (0.5, 1.0, 2.0)]
    eta_samples = eta_samples or [np.array([0.0, 0.0, 1.0 / ell])]
    z = z_norm(TKernelSampler(V, eps, 1), eta_samples, workers=workers)
    L = compute_L(V, DirectionSet.gauss_product(config.KEY_OMEGA_ORDER), workers=workers)
    K = W1Kernel(L, eps)
    rows = []
    for phi in dictionary:
        v = weighted_potential(phi, V)
        b = b_norm(v, workers=workers)
        x = x_norm(K, v, b=b, workers=workers, **key_kwargs)
        rows.append({'dictionary': repr(phi), 'x_norm': x, 'b_norm': b, 'ratio': x / b if b > 0 else math.nan})
    return {'z_norm': z.value, 'z_argmax': z.argmax, 'dictionary': rows,
            'sup_ratio': max((r['ratio'] for r in rows), default=math.nan)}


@dataclass
class ResolventReport:
    residuals: np.ndarray  # (N, S) |(I + T1) * (I - T^(N)) - I| at the samples
    next_terms: np.ndarray  # (N, S) |T_{N+1}| at the samples
    ratios: list  # residual(N+1)/residual(N), sample max
    decaying: bool


def resolvent_identity_check(V, eps=config.EPS, samples=None, n_max=config.NEUMANN_N, box=None, gate=None,
                             check=False):
    """Residual of (I + T1) * (I - T^(N)) - I for T^(N) = sum_{n <= N} (-1)^{n-1} T_n.

    The identity kernels cancel, leaving T1 - T^(N) - T1 * T^(N), which equals (-1)^N T_{N+1}.
    """
    if gate is not None and not gate.passed:
        raise GateError(f'smallness gate failed: {gate.reason}', suggestion='lower the coupling')
    samples = samples or kernel_samples(V, 5)
    box = box or QuadratureBox.for_potential(V)
    t1 = TKernelSampler(V, eps, 1)
    orders = [t1] + [t1.with_order(n) for n in range(2, n_max + 2)]
    res = np.zeros((n_max, len(samples)))
    nxt = np.zeros((n_max, len(samples)))
    for N in range(1, n_max + 1):
        tn = KernelSum(orders[:N], [(-1) ** (n - 1) for n in range(1, N + 1)])
        for i, (x0, x2, eta) in enumerate(samples):
            comp = compose(t1, tn, x0, x2, eta, box, check=check)
            res[N - 1, i] = abs(t1(x0, x2, eta) - tn(x0, x2, eta) - comp)
            nxt[N - 1, i] = abs(orders[N](x0, x2, eta))
    ratios = [float(np.max(res[i + 1] / np.maximum(res[i], 1e-300))) for i in range(n_max - 1)]
    decaying = all(r < 1 for r in ratios)
    if not decaying:
        logger.warning(f'resolvent residual does not decay: ratios {ratios}')
    return ResolventReport(res, nxt, ratios, decaying)
