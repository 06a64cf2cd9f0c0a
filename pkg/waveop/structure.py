"""Structure measures g_1, g_2 of the wave operator and their action on fields.

A measure of order n is stored as components (shift y', weight w, LProfile d). Applied to f it gives

    (W f)(x) = c * sum_k w_k sum_j w_j int_0^inf d_k(s - 2 w_j.x, w_j) exp(-eps s) f(x - s w_j - y'_k) ds

which is the line-measure form f(S_w x - y) with y = r w on the half line r > -2 w.x.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from waveop.config import config
from waveop.lfun import LProfile, compute_L, plane_basis, triple_norm
from waveop.potentials import GridPotential
from waveop.utils.fields import Field3D
from waveop.utils.general import (DivergenceError, GateError, SingularPointError, WindowError,
                                  parallel_map, rel_l2)
from waveop.utils.quadrature import DirectionSet, gauss_legendre

logger = logging.getLogger(__name__)


def reflect(x, omega):
    """S_w x = x - 2 (x.w) w."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(omega, dtype=np.float64)
    if abs(np.linalg.norm(w) - 1.0) > 1e-12:
        raise ValueError(f'reflection needs a unit direction, got |w| = {np.linalg.norm(w)}')
    return x - 2.0 * (x @ w)[..., None] * w


@dataclass
class StructureComponent:
    shift: np.ndarray
    weight: float
    profile: LProfile


@dataclass
class StructureMeasure:
    order: int
    components: list
    constant: complex = config.KL_CONSTANT
    eps: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def dirs(self):
        return self.components[0].profile.dirs

    @property
    def total_variation(self):
        """sum_k w_k sum_j w_j int |d_k(r, w_j)| dr of the stored densities."""
        return float(sum(abs(c.weight) * triple_norm(c.profile) for c in self.components))

    @property
    def scaled_total_variation(self):
        return abs(self.constant) * self.total_variation

    def is_zero(self):
        return all(not np.any(c.profile.values) for c in self.components)

    @staticmethod
    def active(x, omega, r):
        # half-line cutoff (y + 2x).w > 0 with y = r w
        return np.asarray(r) > -2.0 * (np.asarray(x) @ np.asarray(omega))

    def save(self, path):
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        rows = []
        for k, c in enumerate(self.components):
            c.profile.save(path / f'component_{k:04d}.bin')
            rows.append({'shift': np.asarray(c.shift).tolist(), 'weight': c.weight})
        desc = {'order': self.order, 'constant': [self.constant.real, self.constant.imag], 'eps': self.eps,
                'cutoff': 'r > -2 w.x', 'components': rows, 'meta': self.meta,
                'total_variation': self.total_variation}
        with open(path / 'measure.json', 'w') as f:
            json.dump(desc, f, indent=2, default=float)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / 'measure.json') as f:
            desc = json.load(f)
        comps = [StructureComponent(np.array(r['shift']), r['weight'], LProfile.load(path / f'component_{k:04d}.bin'))
                 for k, r in enumerate(desc['components'])]
        return cls(desc['order'], comps, complex(*desc['constant']), desc['eps'], desc.get('meta', {}))


def build_g1(L, constant=config.KL_CONSTANT, eps=0.0):
    """Order-1 measure: one component, no shift, densities L(r, w_j)."""
    return StructureMeasure(1, [StructureComponent(np.zeros(3), 1.0, L)], complex(constant), eps,
                            {'potential': L.provenance.get('potential')})


def _lattice(lo, hi, step):
    i0, i1 = math.floor(lo / step), math.ceil(hi / step)
    return np.arange(i0, i1 + 1)


def _apply_direction(j, g, f, support, pts, z_lo, Lz, interpolation):
    # one direction: sample f on lines in the rotated frame, one matmul per component, sample back
    omega = g.dirs.directions[j]
    e1, e2 = plane_basis(omega)
    h = f.spacing
    hu = 0.5 * h
    A, B, T = pts @ e1, pts @ e2, pts @ omega
    m = _lattice(T.min(), T.max(), hu)
    t = hu * m
    order = 1 if interpolation == 'trilinear' else 3
    out = np.zeros(len(pts), np.complex128)
    c_f, rad = support
    for k, comp in enumerate(g.components):
        p = c_f + comp.shift
        ia = _lattice(p @ e1 - rad, p @ e1 + rad, h)
        ib = _lattice(p @ e2 - rad, p @ e2 + rad, h)
        q = _lattice(p @ omega - rad, p @ omega + rad, hu)
        a, b, u = h * ia, h * ib, hu * q
        P = (a[:, None, None, None] * e1 + b[None, :, None, None] * e2 + u[None, None, :, None] * omega
             - comp.shift)
        phi = f.sample(P.reshape(-1, 3), interpolation).reshape(len(a) * len(b), len(u))

        # kernel matrix A[m, q] = d(-(t_m + u_q)) exp(-eps (t_m - u_q)) on u_q <= t_m
        z = -(m[:, None] + q[None, :])
        dens = Lz[k][j][z - z_lo]
        s = t[:, None] - u[None, :]
        wq = np.where(s > 0, hu, np.where(s == 0, 0.5 * hu, 0.0))
        kern = dens * wq * (np.exp(-g.eps * np.maximum(s, 0.0)) if g.eps else 1.0)
        lines = (phi @ kern.T).reshape(len(a), len(b), len(t))

        sel = ((A >= a[0]) & (A <= a[-1]) & (B >= b[0]) & (B <= b[-1]))
        coords = np.stack([(A[sel] - a[0]) / h, (B[sel] - b[0]) / h, (T[sel] - t[0]) / hu])
        val = ndimage.map_coordinates(lines.real, coords, order=order, mode='constant') \
            + 1j * ndimage.map_coordinates(lines.imag, coords, order=order, mode='constant')
        out[sel] += comp.weight * val
    return g.dirs.weights[j] * out


def apply_structure(g, f, interpolation=config.INTERPOLATION, method='lines', workers=None,
                    support_tol=config.SUPPORT_TOL):
    """W f on the grid of f. 'lines' works per direction in a rotated frame; 'pointwise' is the direct sum."""
    if method == 'pointwise':
        vals = apply_structure_at(g, f, f.points(), interpolation, support_tol)
        return f.like(vals.reshape(f.values.shape))
    if method != 'lines':
        raise ValueError(f'Unknown method "{method}".')
    support = f.support(support_tol)
    if support is None or g.is_zero():
        return f.like(np.zeros_like(f.values))
    pts = f.points()
    hu = 0.5 * f.spacing

    # densities on the r = hu * z lattice that any (t, u) pair can reach
    reach = np.linalg.norm(pts, axis=1).max() + max(np.linalg.norm(c.shift) for c in g.components) \
        + np.linalg.norm(support[0]) + support[1]
    z_lo = -math.ceil(2 * reach / hu) - 2
    zs = np.arange(z_lo, -z_lo + 1)
    Lz = [c.profile.evaluate(hu * zs) for c in g.components]

    J = len(g.dirs)
    chunks = np.array_split(np.arange(J), min(J, 4 * (workers or config.WORKERS)))

    def run(idx):
        acc = np.zeros(len(pts), np.complex128)
        for j in idx:
            acc += _apply_direction(j, g, f, support, pts, z_lo, Lz, interpolation)
        return acc

    parts = parallel_map(run, [c for c in chunks if len(c)], workers)
    total = np.sum(parts, axis=0)  # fixed chunk order
    return f.like(g.constant * total.reshape(f.values.shape))


def apply_structure_at(g, f, points, interpolation=config.INTERPOLATION, support_tol=config.SUPPORT_TOL):
    """Direct evaluation of W f at given points by a midpoint rule in s along every line."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    support = f.support(support_tol)
    if support is None or g.is_zero():
        return np.zeros(len(points), np.complex128)
    c_f, rad = support
    hs = 0.5 * f.spacing
    ns = int(math.ceil(2 * rad / hs)) + 1
    out = np.zeros(len(points), np.complex128)
    for comp in g.components:
        for j, (omega, wj) in enumerate(zip(g.dirs.directions, g.dirs.weights)):
            c = (points - c_f - comp.shift) @ omega
            lo = np.maximum(c - rad, 0.0)
            hi = np.maximum(c + rad, 0.0)
            live = hi > lo
            if not np.any(live):
                continue
            x = points[live]
            ds = (hi[live] - lo[live]) / ns
            s = lo[live, None] + (np.arange(ns) + 0.5) * ds[:, None]
            r = s - 2.0 * (x @ omega)[:, None]
            dens = comp.profile.evaluate(r.ravel(), rows=[j])[0].reshape(r.shape)
            if g.eps:
                dens = dens * np.exp(-g.eps * s)
            smp = x[:, None, :] - s[..., None] * omega - comp.shift
            fv = f.sample(smp.reshape(-1, 3), interpolation).reshape(s.shape)
            out[live] += wj * comp.weight * np.sum(dens * fv, axis=1) * ds
    return g.constant * out


class W1Kernel:
    """K(x, z) = c |z|^-2 exp(-eps |z|) L(|z| - 2 x.z/|z|, z/|z|).

    Off the direction nodes L is taken from the nearest node row; r is interpolated within the row.
    """

    def __init__(self, L, eps=0.0, constant=config.KL_CONSTANT):
        if eps < 0:
            raise ValueError('eps must be nonnegative')
        self.L, self.eps, self.constant = L, float(eps), complex(constant)

    def _nearest_rows(self, zhat):
        return np.argmax(zhat @ self.L.dirs.directions.T, axis=-1)

    def __call__(self, x, z):
        x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
        z = np.asarray(z, dtype=np.float64).reshape(-1, 3)
        rz = np.linalg.norm(z, axis=-1)
        if np.any(rz == 0):
            raise SingularPointError('kernel queried at z = 0', suggestion='offset the quadrature from the origin')
        zhat = z / rz[:, None]
        rows = self._nearest_rows(zhat)
        arg = rz - 2.0 * np.sum(x * zhat, axis=-1)
        vals = np.empty(len(rz), np.complex128)
        for j in np.unique(rows):
            sel = rows == j
            vals[sel] = self.L.evaluate(arg[sel], rows=[j])[0]
        return self.constant * np.exp(-self.eps * rz) * vals / rz ** 2

    def along(self, x, j, s):
        """K(x, s w_j) * s^2 on the node direction w_j."""
        omega = self.L.dirs.directions[j]
        arg = np.asarray(s) - 2.0 * (np.asarray(x) @ omega)
        return self.constant * np.exp(-self.eps * np.asarray(s)) * self.L.evaluate(arg, rows=[j])[0]

    def linf_l1(self, x):
        """int |K(x, z)| dz = |c| sum_j w_j int_0^inf exp(-eps r) |L(r - 2 w_j.x, w_j)| dr."""
        x = np.asarray(x, dtype=np.float64)
        L = self.L
        dr = L.dr
        shift = 2.0 * (L.dirs.directions @ x)
        r_far = L.r_max + np.abs(shift).max()
        r = dr * np.arange(int(math.ceil(r_far / dr)) + 1)
        w = np.full(len(r), dr)
        w[0] = w[-1] = 0.5 * dr
        damp = np.exp(-self.eps * r)
        total = 0.0
        for j, omega in enumerate(L.dirs.directions):
            vals = np.abs(L.evaluate(r - shift[j], rows=[j])[0])
            tail = vals[-1] * (r[-1] - shift[j]) * damp[-1]  # c/r^2 beyond the lattice
            total += L.dirs.weights[j] * (float((vals * damp) @ w) + tail)
        return abs(self.constant) * total


def w1_kernel(L, eps=0.0, constant=config.KL_CONSTANT):
    return W1Kernel(L, eps, constant)


def _yprime_tail(L_nu, V, grid_pts, rho_max, samples=512):
    # share of int_0^inf |L(rho - 2 x.nu)| d rho beyond rho_max, |V|-weighted over x'
    vv = np.abs(V(grid_pts))
    keep = np.argsort(-vv)[:samples]
    x, wv = grid_pts[keep], vv[keep]
    dr = L_nu.dr
    r = dr * np.arange(int(math.ceil((L_nu.r_max + 2 * np.abs(x).max()) / dr)) + 1)
    inner = outer = 0.0
    for j, nu in enumerate(L_nu.dirs.directions):
        arg = r[None, :] - 2.0 * (x @ nu)[:, None]
        a = np.abs(L_nu.evaluate(arg.ravel(), rows=[j])[0]).reshape(arg.shape) * dr
        far = a[:, -1] / dr * np.abs(arg[:, -1])  # r^-2 tail beyond the lattice
        cut = r <= rho_max
        inner += L_nu.dirs.weights[j] * float(wv @ a[:, cut].sum(axis=1))
        outer += L_nu.dirs.weights[j] * float(wv @ (a[:, ~cut].sum(axis=1) + far))
    return outer / (inner + outer) if inner + outer > 0 else 0.0


def build_g2(V, dirs=None, eps=0.0, yprime_n=config.YPRIME_N, yprime_order=config.YPRIME_ORDER, rho_max=None,
             grid_n=config.U_GRID, constant=config.KL_CONSTANT, gate=None, tol=config.YPRIME_TAIL_TOL,
             workers=None, **l_kwargs):
    """Order-2 measure: g_2(x, dy, w) = int dy' g_1[U_y'](x, d(y - y'), w) with U_y'(x') = K_1(x', y') V(x').

    y' = rho nu runs over Gauss-Legendre radii times a direction set; the rho^2 Jacobian cancels |y'|^-2.
    """
    if gate is not None and not gate.passed:
        raise GateError(f'smallness gate failed: {gate.reason}', suggestion='lower the coupling')
    dirs = dirs or DirectionSet.gauss_product()
    ell = V.length_scale
    rho_max = rho_max or config.YPRIME_RHO_SCALE * ell
    nus = DirectionSet.gauss_product(yprime_order)
    L_nu = compute_L(V, nus, workers=workers, **l_kwargs)

    R_U = min(V.support_radius(1e-8), config.U_BOX_SCALE * ell)
    box = Field3D.centered(grid_n, 2 * R_U)
    xp = box.points()
    vx = V(xp)
    tail = _yprime_tail(L_nu, V, xp, rho_max)
    if tail > tol:
        raise WindowError(f"y' window keeps only {1 - tail:.3f} of the K1 mass", tolerance=tol,
                          suggestion='raise rho_max (and the box with it)')

    rhos, wr = gauss_legendre(yprime_n, 0.0, rho_max)
    jobs = [(rho, w_r, i, nu, w_n) for rho, w_r in zip(rhos, wr)
            for i, (nu, w_n) in enumerate(zip(nus.directions, nus.weights))]

    def component(job):
        rho, w_r, i, nu, w_n = job
        mod = L_nu.evaluate(rho - 2.0 * (xp @ nu), rows=[i])[0]
        U = GridPotential(box.like((constant * math.exp(-eps * rho) * mod * vx).reshape(box.values.shape)))
        return StructureComponent(rho * nu, w_r * w_n, compute_L(U, dirs, workers=1, **l_kwargs))

    comps = parallel_map(component, jobs, workers)
    g = StructureMeasure(2, comps, complex(constant), eps,
                         {'potential': V.digest(), 'rho_max': rho_max, 'yprime_tail': tail,
                          'yprime_n': yprime_n, 'yprime_order': yprime_order})
    logger.info(f'g2: {len(comps)} components, TV {g.total_variation:.6g}, y\' tail {tail:.3g}')
    return g


@dataclass
class BornSum:
    field: Field3D
    norms: list  # ||W_n f||_2 for n = 1..N
    ratio: float


def fit_ratio(norms):
    """Geometric ratio from a least-squares line through log ||W_n f||."""
    a = np.asarray([x for x in norms if x > 0])
    if len(a) < 2:
        return 0.0
    slope = np.polyfit(np.arange(len(a)), np.log(a), 1)[0]
    return float(math.exp(slope))


def born_sum(V, f, eps=config.EPS, n_max=config.BORN_N_MAX, tol=config.BORN_TOL, g1=None, gate=None,
             **oracle_kwargs):
    """f + sum_n W_n f with orders from the stationary recursion; order 1 from g1 when given."""
    from waveop.oracles import ls_born_iterate
    if gate is not None and not gate.passed:
        raise GateError(f'smallness gate failed: {gate.reason}', suggestion='lower the coupling')
    terms = ls_born_iterate(V, f, eps, n_max, tol=tol, **oracle_kwargs).terms
    if g1 is not None and terms:
        terms[0] = apply_structure(g1, f)
    norms = [t.norm() for t in terms]
    for n in range(1, len(norms)):
        if norms[n] >= norms[n - 1] and norms[n] > 0:
            raise DivergenceError(f'Born orders stop decaying at n = {n + 1}: {norms[n - 1]:.3g} -> {norms[n]:.3g}',
                                  suggestion='the smallness gate was too permissive')
    total = f.values.copy()
    for t in terms:
        total = total + t.values
    ratio = fit_ratio(norms)
    iso = np.linalg.norm(total) / np.linalg.norm(f.values)
    logger.info(f'Born sum: {len(terms)} orders, ratio {ratio:.4g}, |f + W f| / |f| = {iso:.6f}')
    return BornSum(f.like(total), norms, ratio)


def calibrate_kl_constant(V, f, dirs=None, eps=0.0, interpolation=config.INTERPOLATION, **oracle_kwargs):
    """Least-squares c with c * apply(g1 at c=1, f) ~ first stationary Born term; returns (c, residual)."""
    from waveop.oracles import ls_born_iterate
    L = compute_L(V, dirs)
    s = apply_structure(build_g1(L, constant=1.0, eps=0.0), f, interpolation)
    o = ls_born_iterate(V, f, eps, 1, **oracle_kwargs).terms[0]
    den = np.vdot(s.values, s.values)
    if den == 0:
        return complex(0.0), 0.0
    c = complex(np.vdot(s.values, o.values) / den)
    return c, rel_l2(c * s.values, o.values)
