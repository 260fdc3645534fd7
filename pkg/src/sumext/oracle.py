"""Variational back end: the J-functionals, membership gauges, basis tests and the OK predicate.

Every problem is posed in a finite spline space:

* exact path (n = 1, p = 2): B-splines of degree 2m-1 with knots at the atoms and
  constraint points.  Without an L^p anchor term the minimizer over all of R lives in
  this space, so the computed value is the true infimum.
* discretized path: uniform (tensor) B-spline grids, p-th powers handled by IRLS.

Objectives are written as weighted residual rows  g * |A c - B theta|^p  plus equality
rows  E c = G theta, where theta collects the data: atom values f, anchor coefficients
and jet targets.  For p = 2 the minimizer is linear in theta and the optimal value is a
quadratic form in theta; both are returned so callers can reuse one factorization.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.interpolate import BSpline

from .config import Config, default_config
from .jets import (
    Jet,
    full_label,
    jet_dim,
    labels_below,
    monomial_derivs,
    multi_indices,
    multiindex_less,
    top_order_indices,
)
from .measures import AtomicMeasure, Box

log = logging.getLogger(__name__)


class InfeasibleError(ValueError):
    """Exact-interpolation constraints cannot all hold."""


class ToleranceError(RuntimeError):
    """The iterative solver did not reach the requested tolerance."""


@functools.lru_cache(maxsize=None)
def _gauss(q: int):
    return np.polynomial.legendre.leggauss(q)


# ---------------------------------------------------------------------------
# spline spaces


class Space:
    """Tensor B-spline space on the box lo + h * [0,1]^n; knots are given in [0,1]."""

    def __init__(self, lo, hi, degree: int, knots):
        self.lo = np.asarray(lo, float).reshape(-1)
        self.hi = np.asarray(hi, float).reshape(-1)
        self.n = self.lo.size
        self.h = self.hi - self.lo
        if np.any(self.h <= 0):
            raise ValueError("spline domain must have positive width")
        self.degree = degree
        self.knots = [np.asarray(t, float) for t in knots]
        self.sizes = [len(t) - degree - 1 for t in self.knots]
        self.dim = int(np.prod(self.sizes))
        self._splines = {}

    @property
    def box(self) -> Box:
        return Box(self.lo, self.hi)

    def _axis(self, d: int, order: int) -> BSpline | None:
        key = (d, order)
        if key not in self._splines:
            if order > self.degree:
                self._splines[key] = None
            else:
                spl = BSpline(self.knots[d], np.eye(self.sizes[d]), self.degree, extrapolate=True)
                self._splines[key] = spl.derivative(order) if order else spl
        return self._splines[key]

    def _axis_eval(self, s, d, order):
        spl = self._axis(d, order)
        if spl is None:
            return np.zeros((s.size, self.sizes[d]))
        out = spl(np.clip(s, 0.0, 1.0)) * self.h[d] ** (-order)
        out[(s < -1e-12) | (s > 1 + 1e-12)] = 0.0
        return out

    def basis(self, pts, alpha) -> np.ndarray:
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        s = (pts - self.lo) / self.h
        out = self._axis_eval(s[:, 0], 0, alpha[0])
        for d in range(1, self.n):
            b = self._axis_eval(s[:, d], d, alpha[d])
            out = (out[:, :, None] * b[:, None, :]).reshape(pts.shape[0], -1)
        return out

    def breakpoints(self, d: int = 0) -> np.ndarray:
        return self.lo[d] + self.h[d] * np.unique(self.knots[d])

    def quadrature(self, extra: int = 2):
        """Composite Gauss rule between distinct knots: points (q, n), weights (q,)."""
        q = self.degree + extra
        xg, wg = _gauss(q)
        axes_pts, axes_w = [], []
        for d in range(self.n):
            u = np.unique(self.knots[d])
            a, b = u[:-1], u[1:]
            keep = b > a
            a, b = a[keep], b[keep]
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            s = (mid[:, None] + half[:, None] * xg[None, :]).reshape(-1)
            w = (half[:, None] * wg[None, :]).reshape(-1)
            axes_pts.append(self.lo[d] + self.h[d] * s)
            axes_w.append(self.h[d] * w)
        if self.n == 1:
            return axes_pts[0].reshape(-1, 1), axes_w[0]
        X, Y = np.meshgrid(axes_pts[0], axes_pts[1], indexing="ij")
        WX, WY = np.meshgrid(axes_w[0], axes_w[1], indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()]), (WX * WY).ravel()


def _merge_knots(values: dict, tol: float = 1e-13) -> list:
    """values: s -> multiplicity.  Nearby s are merged (max multiplicity)."""
    out = []
    for s in sorted(values):
        if out and s - out[-1][0] <= tol:
            out[-1] = (out[-1][0], max(out[-1][1], values[s]))
        else:
            out.append((s, values[s]))
    return out


def exact_space(lo: float, hi: float, m: int, atom_x, jet_orders: dict, refine: int = 0) -> Space:
    """Degree 2m-1 splines with simple knots at atoms and (r+1)-fold knots at points where
    derivatives up to order r are prescribed."""
    k = 2 * m - 1
    h = hi - lo
    mult = {}
    for x in np.reshape(atom_x, -1):
        s = (float(x) - lo) / h
        mult[s] = max(mult.get(s, 0), 1)
    for x, r in jet_orders.items():
        s = (float(x) - lo) / h
        mult[s] = max(mult.get(s, 0), min(r + 1, k + 1))
    for j in range(1, refine):
        s = j / refine
        mult.setdefault(s, 1)
    interior = []
    for s, r in _merge_knots(mult):
        if 1e-12 < s < 1 - 1e-12:
            interior.extend([s] * min(r, k))
    t = np.concatenate([np.zeros(k + 1), interior, np.ones(k + 1)])
    return Space([lo], [hi], k, [t])


def grid_space(lo, hi, degree: int, cells: int) -> Space:
    lo = np.reshape(np.asarray(lo, float), -1)
    knots = []
    for _ in range(lo.size):
        inner = np.linspace(0, 1, cells + 1)[1:-1]
        knots.append(np.concatenate([np.zeros(degree + 1), inner, np.ones(degree + 1)]))
    return Space(lo, hi, degree, knots)


# ---------------------------------------------------------------------------
# problem description


@dataclass
class SolveSpec:
    """One J-type minimization.

    Parameter vector theta = [f (one per atom) | anchor coefficients | jet targets].
    Anchor coefficients are monomial coefficients in u = (x - anchor_center) / anchor_scale.
    """

    m: int
    n: int
    p: float
    x: np.ndarray
    w: np.ndarray
    domain: Box | None = None
    anchor_delta: float | None = None
    anchor_center: tuple | None = None
    anchor_scale: float = 1.0
    jets: list = field(default_factory=list)  # [(point, (alpha, ...)), ...]

    def __post_init__(self):
        self.x = np.reshape(np.asarray(self.x, float), (-1, self.n))
        self.w = np.reshape(np.asarray(self.w, float), -1)

    @property
    def D(self) -> int:
        return jet_dim(self.m, self.n)

    @property
    def n_atoms(self) -> int:
        return self.x.shape[0]

    @property
    def off_anchor(self) -> int:
        return self.n_atoms

    @property
    def off_targets(self) -> int:
        return self.n_atoms + (self.D if self.anchor_delta is not None else 0)

    @property
    def n_theta(self) -> int:
        return self.off_targets + sum(len(a) for _, a in self.jets)

    def theta(self, f=None, anchor=None, targets=None) -> np.ndarray:
        th = np.zeros(self.n_theta)
        if f is not None and self.n_atoms:
            th[: self.n_atoms] = f
        if anchor is not None:
            th[self.off_anchor : self.off_anchor + self.D] = anchor
        if targets is not None:
            th[self.off_targets :] = targets
        return th

    def resolved_domain(self) -> Box:
        if self.domain is not None:
            return self.domain
        pts = [self.x] + [np.reshape(pt, (1, self.n)) for pt, _ in self.jets]
        allp = np.vstack(pts)
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        width = hi - lo
        span = float(width.max())
        pad = np.where(width > 0, 0.0, 0.5 * (span if span > 0 else 1.0))
        return Box(lo - pad, hi + pad)


def anchor_values(pts, m, n, center, scale) -> np.ndarray:
    """Values of the monomials u^beta at pts, u = (x - center)/scale, shape (npts, D)."""
    zero = ((0,) * n,)
    vals = monomial_derivs(pts, m, n, alphas=zero, center=center)[0]
    degs = np.array([sum(b) for b in multi_indices(m, n)], float)
    return vals / float(scale) ** degs


def make_space(spec: SolveSpec, cfg: Config) -> Space:
    box = spec.resolved_domain()
    if cfg.exact:
        orders = {}
        for pt, alphas in spec.jets:
            if not alphas:
                continue
            key = float(np.reshape(pt, -1)[0])
            orders[key] = max(orders.get(key, 0), max(sum(a) for a in alphas))
        refine = cfg.refine if spec.anchor_delta is not None else 0
        return exact_space(box.lo[0], box.hi[0], spec.m, spec.x[:, 0], orders, refine)
    if spec.n == 1:
        return grid_space(box.lo, box.hi, 2 * spec.m - 1, cfg.grid)
    return grid_space(box.lo, box.hi, spec.m + 1, cfg.grid2)


@dataclass
class Assembled:
    space: Space
    groups: list  # (name, A, B, g)
    E: np.ndarray
    G: np.ndarray
    n_theta: int


def assemble(spec: SolveSpec, space: Space) -> Assembled:
    m, n, p = spec.m, spec.n, spec.p
    nth = spec.n_theta
    K = space.dim
    qp, qw = space.quadrature()
    groups = []
    for a in top_order_indices(m, n):
        groups.append(("seminorm", space.basis(qp, a), np.zeros((qp.shape[0], nth)), qw))
    zero = (0,) * n
    finite = np.isfinite(spec.w)
    if finite.any():
        idx = np.flatnonzero(finite)
        A = space.basis(spec.x[idx], zero)
        B = np.zeros((idx.size, nth))
        B[np.arange(idx.size), idx] = 1.0
        groups.append(("atoms", A, B, spec.w[idx]))
    if spec.anchor_delta is not None:
        A = space.basis(qp, zero)
        B = np.zeros((qp.shape[0], nth))
        ctr = spec.anchor_center if spec.anchor_center is not None else np.zeros(n)
        B[:, spec.off_anchor : spec.off_anchor + spec.D] = anchor_values(qp, m, n, ctr, spec.anchor_scale)
        groups.append(("anchor", A, B, qw / spec.anchor_delta ** (m * p)))
    E_rows, G_rows = [], []
    inf_idx = np.flatnonzero(~finite)
    if inf_idx.size:
        E_rows.append(space.basis(spec.x[inf_idx], zero))
        Gi = np.zeros((inf_idx.size, nth))
        Gi[np.arange(inf_idx.size), inf_idx] = 1.0
        G_rows.append(Gi)
    col = spec.off_targets
    for pt, alphas in spec.jets:
        for a in alphas:
            E_rows.append(space.basis(np.reshape(pt, (1, n)), a))
            g = np.zeros((1, nth))
            g[0, col] = 1.0
            G_rows.append(g)
            col += 1
    E = np.vstack(E_rows) if E_rows else np.zeros((0, K))
    G = np.vstack(G_rows) if G_rows else np.zeros((0, nth))
    return Assembled(space, groups, E, G, nth)


# ---------------------------------------------------------------------------
# linear algebra


def _kkt_solve(H, E, rhs_top, rhs_bottom):
    """Solve [[H, E^T], [E, 0]] [c; lam] = [rhs_top; rhs_bottom] (matrix right-hand sides).

    Symmetric diagonal equilibration, LU first, SVD least squares as fallback.
    """
    K, ne = H.shape[0], E.shape[0]
    M = np.zeros((K + ne, K + ne))
    M[:K, :K] = H
    M[K:, :K] = E
    M[:K, K:] = E.T
    rhs = np.vstack([rhs_top, rhs_bottom])
    scale = np.abs(M).max(axis=1)
    scale[scale == 0] = 1.0
    d = 1.0 / np.sqrt(scale)
    Ms = d[:, None] * M * d[None, :]
    rs = d[:, None] * rhs
    sol = None
    try:
        y = np.linalg.solve(Ms, rs)
        if np.all(np.isfinite(y)):
            r = Ms @ y - rs
            if np.linalg.norm(r) <= 1e-9 * (1.0 + np.linalg.norm(rs)):
                sol = y
    except np.linalg.LinAlgError:
        pass
    if sol is None:
        sol = np.linalg.lstsq(Ms, rs, rcond=1e-13)[0]
    return d[:, None] * sol


def _constrained_lstsq(asm: Assembled) -> np.ndarray:
    """Cmap minimizing sum g|A c - B theta|^2 subject to E c = G theta.

    Works on the weighted rows through a null-space basis of E rather than the normal
    equations: on domains much narrower than the anchor scale the normal equations lose
    polynomial reproduction to roundoff.
    """
    K = asm.space.dim
    A = np.vstack([np.sqrt(g)[:, None] * Ag for _, Ag, _, g in asm.groups])
    B = np.vstack([np.sqrt(g)[:, None] * Bg for _, _, Bg, g in asm.groups])
    if asm.E.shape[0]:
        c0 = scipy.linalg.lstsq(asm.E, asm.G)[0]
        N = scipy.linalg.null_space(asm.E)
    else:
        c0 = np.zeros((K, asm.n_theta))
        N = np.eye(K)
    if N.shape[1] == 0:
        return c0
    AN = A @ N
    col = np.sqrt((AN**2).sum(axis=0))
    col[col == 0] = 1.0
    z = scipy.linalg.lstsq(AN / col, B - A @ c0)[0] / col[:, None]
    return c0 + N @ z


class QuadSolution:
    """p = 2 minimizer as a linear map of theta, plus the optimal value as a quadratic form."""

    def __init__(self, spec: SolveSpec, asm: Assembled):
        self.spec = spec
        self.space = asm.space
        self.asm = asm
        self.Cmap = _constrained_lstsq(asm)
        V = np.zeros((asm.n_theta, asm.n_theta))
        for _, A, B, g in asm.groups:
            Rm = A @ self.Cmap - B
            V += Rm.T @ (g[:, None] * Rm)
        self.V = 0.5 * (V + V.T)
        self.resid_map = asm.E @ self.Cmap - asm.G

    def coeffs(self, theta) -> np.ndarray:
        return self.Cmap @ theta

    def residual(self, theta) -> float:
        if self.resid_map.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.resid_map @ theta)))

    def feasible(self, theta) -> bool:
        scale = 1.0 + (float(np.max(np.abs(self.asm.G @ theta))) if self.asm.G.shape[0] else 0.0)
        return self.residual(theta) <= 1e-8 * scale

    def value(self, theta) -> float:
        if not self.feasible(theta):
            return math.inf
        return max(float(theta @ self.V @ theta), 0.0)

    def function(self, theta) -> "SplineFunction":
        return SplineFunction(self.space, self.coeffs(theta))


def quadratic_solution(spec: SolveSpec, cfg: Config) -> QuadSolution:
    space = make_space(spec, cfg)
    return QuadSolution(spec, assemble(spec, space))


def _objective(groups, c, theta, p):
    total = 0.0
    for _, A, B, g in groups:
        r = A @ c - B @ theta
        total += float(np.sum(g * np.abs(r) ** p))
    return total


def irls_solve(spec: SolveSpec, cfg: Config, theta):
    """Minimize sum g|A c - B theta|^p subject to E c = G theta by reweighted least squares."""
    asm = assemble(spec, make_space(spec, cfg))
    p = spec.p
    theta = np.asarray(theta, float)
    bvec = [(A, B @ theta, g) for _, A, B, g in asm.groups]
    gt = asm.G @ theta
    K = asm.space.dim
    weights = [g.copy() for _, _, g in bvec]
    history = []
    c = None
    obj = math.inf
    converged = False
    for _ in range(cfg.irls_max_iter):
        H = np.zeros((K, K))
        r = np.zeros((K, 1))
        for (A, b, _), u in zip(bvec, weights):
            H += A.T @ (u[:, None] * A)
            r[:, 0] += A.T @ (u * b)
        ridge = 1e-14 * max(np.trace(H) / K, 1e-300)
        H[np.diag_indices(K)] += ridge
        c_new = _kkt_solve(H, asm.E, r, gt[:, None])[:K, 0]
        if c is None:
            c = c_new
            obj = _objective(asm.groups, c, theta, p)
        else:
            step = 1.0
            accepted = False
            while step > 1e-6:
                trial = c + step * (c_new - c)
                o = _objective(asm.groups, trial, theta, p)
                if o <= obj:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                converged = True
                break
            rel = (obj - o) / max(obj, 1e-300)
            c, obj = trial, o
            if rel <= cfg.irls_tol:
                converged = True
                break
        history.append(obj)
        res_all = [A @ c - b for A, b, _ in bvec]
        amax = max((float(np.max(np.abs(x))) for x in res_all if x.size), default=0.0)
        eta = max(cfg.irls_damping * amax, 1e-300)
        weights = [g * (rr**2 + eta**2) ** ((p - 2) / 2) for (_, _, g), rr in zip(bvec, res_all)]
    if not converged and p != 2:
        raise ToleranceError("IRLS did not reach the requested tolerance")
    resid = float(np.max(np.abs(asm.E @ c - gt))) if asm.E.shape[0] else 0.0
    return SolveResult(obj, SplineFunction(asm.space, c), {"history": history, "constraint_residual": resid})


# ---------------------------------------------------------------------------
# results


class SplineFunction:
    """Evaluable spline with derivatives; zero outside its domain box."""

    def __init__(self, space: Space, coeffs):
        self.space = space
        self.coeffs = np.asarray(coeffs, float)
        self.n = space.n

    def __call__(self, pts) -> np.ndarray:
        return self.space.basis(pts, (0,) * self.n) @ self.coeffs

    def derivative(self, pts, alpha) -> np.ndarray:
        return self.space.basis(pts, tuple(alpha)) @ self.coeffs

    def jet(self, x, m) -> Jet:
        alphas = multi_indices(m, self.n)
        d = [float(self.derivative(np.reshape(x, (1, self.n)), a)[0]) for a in alphas]
        return Jet.from_derivatives(d, x, m, self.n)


@dataclass
class SolveResult:
    value: float
    minimizer: SplineFunction | None
    certificate: dict


def solve(spec: SolveSpec, cfg: Config, theta) -> SolveResult:
    """Minimize one J-type objective for concrete data theta."""
    theta = np.asarray(theta, float)
    if spec.p == 2:
        qs = quadratic_solution(spec, cfg)
        val = qs.value(theta)
        return SolveResult(val, qs.function(theta), {"constraint_residual": qs.residual(theta), "path": cfg.oracle})
    return irls_solve(spec, cfg, theta)


# ---------------------------------------------------------------------------
# public functionals


def _cfg_for(measure: AtomicMeasure, cfg: Config | None, m: int | None, p: float | None) -> Config:
    if cfg is not None:
        return cfg
    return default_config(m=m or 1, n=measure.n, p=p or 2.0)


def _check_duplicates(measure: AtomicMeasure, values):
    inf = measure.infinite
    if inf.sum() < 2:
        return
    locs = [tuple(x) for x in measure.locations[inf]]
    vals = np.asarray(values, float)[inf]
    seen = {}
    for loc, v in zip(locs, vals):
        if loc in seen and seen[loc] != v:
            raise InfeasibleError(f"conflicting exact values at {loc}")
        seen[loc] = v


def j_norm(values, measure: AtomicMeasure, cfg: Config | None = None, m=None, p=None) -> float:
    """inf_F ||F||^p_{L^{m,p}} + sum_j w_j |F(x_j) - f_j|^p  (the p-th power of the norm)."""
    cfg = _cfg_for(measure, cfg, m, p)
    values = np.asarray(values, float)
    _check_duplicates(measure, values)
    if len(measure) <= 1:
        return 0.0
    spec = SolveSpec(cfg.m, cfg.n, cfg.p, measure.locations, measure.weights)
    res = solve(spec, cfg, spec.theta(f=values))
    if math.isinf(res.value):
        raise InfeasibleError("exact-interpolation constraints are inconsistent")
    return res.value


def j_norm_with_jet(values, P0: Jet, measure: AtomicMeasure, delta: float, domain: Box, cfg: Config | None = None) -> float:
    """Adds ||F - P0||^p_{L^p(domain)} / delta^{mp}; integrals are taken over the domain box."""
    cfg = _cfg_for(measure, cfg, P0.m, None)
    sub = measure.restrict(domain) if len(measure) else measure
    keep = domain.contains(measure.locations) if len(measure) else np.zeros(0, bool)
    vals = np.asarray(values, float)[keep] if len(measure) else np.zeros(0)
    center = domain.center
    spec = SolveSpec(cfg.m, cfg.n, cfg.p, sub.locations.reshape(-1, cfg.n), sub.weights, domain=domain,
                     anchor_delta=delta, anchor_center=tuple(center), anchor_scale=1.0)
    anchor = P0.recenter(center).coeffs
    return solve(spec, cfg, spec.theta(f=vals, anchor=anchor)).value


class GaugeForm:
    """For p = 2: the squared gauge of jets at x as a quadratic form in the derivative vector.

    If x carries an infinite-weight atom, F(x) is pinned to 0 (data are zero in sigma)."""

    def __init__(self, x, measure: AtomicMeasure, scope: Box | None, cfg: Config):
        m, n = cfg.m, cfg.n
        self.m, self.n = m, n
        self.x = np.reshape(np.asarray(x, float), n)
        self.alphas = multi_indices(m, n)
        sub = measure.restrict(scope) if scope is not None else measure
        inf_at_x = sub.infinite & np.all(sub.locations == self.x, axis=1)
        self.pinned = bool(inf_at_x.any())
        jet_alphas = tuple(a for a in self.alphas if not (self.pinned and sum(a) == 0))
        self.jet_alphas = jet_alphas
        jets = [(self.x, jet_alphas)] if jet_alphas else []
        spec = SolveSpec(m, n, 2.0, sub.locations, sub.weights, domain=scope, jets=jets)
        self.qs = quadratic_solution(spec, cfg)
        off = spec.off_targets
        self.V = self.qs.V[off:, off:]
        self.spec = spec

    def _split(self, targets: dict):
        """targets: alpha -> value for constrained indices.  Returns (ok, C positions, values, F positions)."""
        C, vals = [], []
        for a, v in targets.items():
            if self.pinned and sum(a) == 0:
                if v != 0:
                    return False, None, None, None
                continue
            C.append(self.jet_alphas.index(a))
            vals.append(v)
        F = [i for i in range(len(self.jet_alphas)) if i not in C]
        return True, C, np.array(vals, float), F

    def minimize(self, targets: dict):
        """Smallest squared gauge over jets with the given derivatives; returns (value, derivative vector)."""
        ok, C, tC, F = self._split(targets)
        if not ok:
            return math.inf, None
        V = self.V
        tF = np.zeros(len(F))
        if F:
            VFF = V[np.ix_(F, F)]
            VFC = V[np.ix_(F, C)]
            tF = -np.linalg.lstsq(VFF, VFC @ tC, rcond=1e-12)[0]
        t = np.zeros(len(self.jet_alphas))
        t[C] = tC
        t[F] = tF
        th = np.zeros(self.spec.n_theta)
        th[self.spec.off_targets :] = t
        val = self.qs.value(th)
        full = np.zeros(len(self.alphas))
        for i, a in enumerate(self.jet_alphas):
            full[self.alphas.index(a)] = t[i]
        return val, full


def gauge(P: Jet, x, measure: AtomicMeasure, scope: Box | None = None, cfg: Config | None = None) -> float:
    """inf { ||F||_{J(0, mu|scope)} : J_x F = P }."""
    cfg = _cfg_for(measure, cfg, P.m, None)
    x = np.reshape(np.asarray(x, float), cfg.n)
    sub = measure.restrict(scope) if scope is not None else measure
    if len(sub) == 0:
        return 0.0
    d = P.derivatives(x)
    alphas = multi_indices(cfg.m, cfg.n)
    if cfg.p == 2:
        form = GaugeForm(x, sub, scope, cfg)
        val, _ = form.minimize(dict(zip(alphas, d)))
        return math.sqrt(val)
    spec = SolveSpec(cfg.m, cfg.n, cfg.p, sub.locations, sub.weights, domain=scope, jets=[(x, alphas)])
    res = irls_solve(spec, cfg, spec.theta(targets=d))
    return res.value ** (1.0 / cfg.p)


@dataclass
class BasisResult:
    ok: bool
    jets: dict
    gauges: dict
    bounds: dict


def _basis_targets(A, alpha, m, n) -> dict:
    tg = {b: (1.0 if b == alpha else 0.0) for b in A}
    for b in multi_indices(m, n):
        if b not in A and multiindex_less(alpha, b):
            tg[b] = 0.0
    return tg


def has_basis(A, x, eps: float, delta: float, measure: AtomicMeasure, scope: Box | None, cfg: Config,
              form: GaugeForm | None = None) -> BasisResult:
    """Look for an (A, x, eps, delta)-basis: one minimal-gauge jet per alpha in A."""
    m, n, p = cfg.m, cfg.n, cfg.p
    x = np.reshape(np.asarray(x, float), n)
    sub = measure.restrict(scope) if scope is not None else measure
    jets, gauges, bounds = {}, {}, {}
    ok = True
    alphas = multi_indices(m, n)
    for alpha in sorted(A, key=lambda a: alphas.index(a)):
        bound = eps * delta ** (n / p + sum(alpha) - m)
        targets = _basis_targets(A, alpha, m, n)
        if len(sub) == 0:
            g, d = 0.0, np.array([targets.get(b, 0.0) for b in alphas])
        elif p == 2:
            if form is None:
                form = GaugeForm(x, sub, scope, cfg)
            val, d = form.minimize(targets)
            g = math.sqrt(val) if math.isfinite(val) else math.inf
        else:
            keys = list(targets)
            spec = SolveSpec(m, n, p, sub.locations, sub.weights, domain=scope, jets=[(x, tuple(keys))])
            try:
                res = irls_solve(spec, cfg, spec.theta(targets=[targets[k] for k in keys]))
                g = res.value ** (1.0 / p)
                d = np.array([res.minimizer.derivative(x, b)[0] for b in alphas])
            except ToleranceError:
                g, d = math.inf, None
        gauges[alpha] = g
        bounds[alpha] = bound
        if d is not None:
            jets[alpha] = Jet.from_derivatives(d, x, m, n)
        if not g <= bound * (1 + 1e-12):
            ok = False
            break
    return BasisResult(ok, jets, gauges, bounds)


def smallok_threshold(delta_q: float, cfg: Config) -> float:
    """Mass bound below which a cube is OK outright: (eps (30 delta_Q)^{n/p - m})^p."""
    return (cfg.eps * (30.0 * delta_q) ** (cfg.n / cfg.p - cfg.m)) ** cfg.p


def ok_test(cube: Box, A, measure: AtomicMeasure, cfg: Config):
    """(True, witness) when some monotonic label below A admits bases at every atom of 3Q."""
    delta_q = float(cube.sides.max())
    q3 = cube.dilate(3.0)
    sub = measure.restrict(q3)
    full = full_label(cfg.m, cfg.n)
    mass = sub.mass()
    if mass <= smallok_threshold(delta_q, cfg) * (1 + 1e-12):
        return True, full
    forms = {}
    for cand in labels_below(A, cfg.m, cfg.n):
        good = True
        for x in sub.locations:
            key = tuple(x)
            if cfg.p == 2 and key not in forms:
                forms[key] = GaugeForm(x, sub, q3, cfg)
            res = has_basis(cand, x, cfg.eps, 30.0 * delta_q, sub, q3, cfg, form=forms.get(key))
            if not res.ok:
                good = False
                break
        if good:
            return True, cand
    return False, None
