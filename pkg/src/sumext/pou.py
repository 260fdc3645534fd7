"""Partitions of unity subordinate to {1.1 Q_i} and the cutoff-gluing primitive."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .jets import Jet, all_multi_indices
from .measures import Box

MARGIN = 0.05  # collar width per side, as a fraction of the cube side (support is 1.1Q)


@lru_cache(maxsize=None)
def smoothstep_coeffs(m: int) -> tuple:
    """Degree 2m+1 polynomial S with S(0)=0, S(1)=1 and derivatives 1..m vanishing at both ends.

    Returned as tuple of coefficient arrays for S, S', ..., S^(2m+1) (increasing powers)."""
    c = np.zeros(2 * m + 2)
    for k in range(m + 1):
        c[m + 1 + k] = math.comb(m + k, k) * math.comb(2 * m + 1, m - k) * (-1) ** k
    out = [c]
    poly = np.polynomial.Polynomial(c)
    for _ in range(2 * m + 1):
        poly = poly.deriv()
        out.append(poly.coef)
    return tuple(out)


def smoothstep(u, m: int, order: int = 0) -> np.ndarray:
    u = np.asarray(u, float)
    coeffs = smoothstep_coeffs(m)
    if order >= len(coeffs):
        return np.zeros_like(u)
    uc = np.clip(u, 0.0, 1.0)
    val = np.polynomial.polynomial.polyval(uc, coeffs[order])
    if order == 0:
        return np.where(u <= 0, 0.0, np.where(u >= 1, 1.0, val))
    return np.where((u <= 0) | (u >= 1), 0.0, val)


def plateau(x, lo: float, hi: float, eta: float, m: int, order: int = 0) -> np.ndarray:
    """1 on [lo, hi], smoothstep up on [lo - eta, lo] and down on [hi, hi + eta], 0 beyond."""
    x = np.asarray(x, float)
    left = smoothstep((x - (lo - eta)) / eta, m, order) * eta ** (-order)
    right = smoothstep(((hi + eta) - x) / eta, m, order) * (-1.0 / eta) ** order
    if order == 0:
        return np.where(x < lo, left, np.where(x > hi, right, 1.0))
    return np.where(x < lo, left, np.where(x > hi, right, 0.0))


def bump_derivs(box: Box, pts, order: int, m: int, margin: float = MARGIN, margins=None) -> np.ndarray:
    """Tensor plateau bump of a box: derivatives for all multi-indices of order <= ``order``.

    Shape (n_alpha, npts), multi-indices ordered as all_multi_indices(order, n)."""
    pts = np.reshape(np.asarray(pts, float), (-1, box.n))
    n = box.n
    eta = margins if margins is not None else margin * box.sides
    axis = [[plateau(pts[:, d], box.lo[d], box.hi[d], eta[d], m, k) for k in range(order + 1)] for d in range(n)]
    alphas = all_multi_indices(order, n)
    out = np.empty((len(alphas), pts.shape[0]))
    for i, a in enumerate(alphas):
        v = axis[0][a[0]].copy()
        for d in range(1, n):
            v *= axis[d][a[d]]
        out[i] = v
    return out


def _binom_alpha(a, b) -> float:
    return float(np.prod([math.comb(x, y) for x, y in zip(a, b)]))


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _leq(b, a):
    return all(x <= y for x, y in zip(b, a))


@lru_cache(maxsize=None)
def leibniz_table(order: int, n: int):
    """For each alpha: list of (beta index, alpha-beta index, binomial) over beta <= alpha."""
    alphas = all_multi_indices(order, n)
    pos = {a: i for i, a in enumerate(alphas)}
    table = []
    for a in alphas:
        terms = []
        for b in alphas:
            if _leq(b, a):
                terms.append((pos[b], pos[_sub(a, b)], _binom_alpha(a, b)))
        table.append(terms)
    return alphas, table


def quotient_derivs(phi: np.ndarray, S: np.ndarray, order: int, n: int) -> np.ndarray:
    """Derivatives of phi / S from derivatives of phi and S (same multi-index layout)."""
    alphas, table = leibniz_table(order, n)
    out = np.zeros_like(phi)
    S0 = np.where(S[0] > 0, S[0], 1.0)
    for i, a in enumerate(alphas):
        acc = phi[i].copy()
        for bi, ri, c in table[i]:
            if bi == 0:
                continue
            acc -= c * S[bi] * out[ri]
        out[i] = np.where(S[0] > 0, acc / S0, 0.0)
    return out


class BumpSystem:
    """theta_i = phi_i / sum_j phi_j with phi_i the plateau bump of Q_i (support 1.1 Q_i)."""

    def __init__(self, boxes, m: int, margin: float = MARGIN):
        self.boxes = list(boxes)
        self.m = m
        self.margin = margin
        self.n = self.boxes[0].n if self.boxes else 1
        self.supports = [b.dilate(1 + 2 * margin) for b in self.boxes]
        self._slo = np.array([s.lo for s in self.supports]) if self.boxes else np.zeros((0, self.n))
        self._shi = np.array([s.hi for s in self.supports]) if self.boxes else np.zeros((0, self.n))

    def active(self, pts) -> list:
        """For each cube, indices of points in its (closed) support."""
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        out = []
        for i in range(len(self.boxes)):
            inside = np.all((pts >= self._slo[i]) & (pts <= self._shi[i]), axis=1)
            out.append(np.flatnonzero(inside))
        return out

    def theta_derivs(self, pts, order: int):
        """List of (cube index, point indices, derivative array (n_alpha, len(idx)))."""
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        alphas = all_multi_indices(order, self.n)
        S = np.zeros((len(alphas), pts.shape[0]))
        act = self.active(pts)
        phis = []
        for i, idx in enumerate(act):
            if idx.size == 0:
                continue
            ph = bump_derivs(self.boxes[i], pts[idx], order, self.m, self.margin)
            S[:, idx] += ph
            phis.append((i, idx, ph))
        return [(i, idx, quotient_derivs(ph, S[:, idx], order, self.n)) for i, idx, ph in phis]

    def theta(self, pts) -> np.ndarray:
        """Values theta_i at pts: array (ncubes, npts)."""
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        out = np.zeros((len(self.boxes), pts.shape[0]))
        for i, idx, d in self.theta_derivs(pts, 0):
            out[i, idx] = d[0]
        return out


def build_pou(tree, m: int) -> BumpSystem:
    return BumpSystem(tree.boxes, m)


def _audit_points(box: Box, per_axis: int):
    g = per_axis
    axes = [box.lo[d] + box.sides[d] * (np.arange(g) + 0.5) / g for d in range(box.n)]
    if box.n == 1:
        yield axes[0].reshape(-1, 1)
        return
    for xv in np.array_split(axes[0], max(1, g // 64)):
        X, Y = np.meshgrid(xv, axes[1], indexing="ij")
        yield np.column_stack([X.ravel(), Y.ravel()])


def audit_pou(system: BumpSystem, frame: Box, per_axis: int = 1024, order: int | None = None) -> dict:
    """POU1-POU4 on a per_axis^n grid over a box slightly larger than the frame."""
    order = system.m if order is None else order
    region = frame.dilate(1.2)
    alphas = all_multi_indices(order, system.n)
    degs = np.array([sum(a) for a in alphas])
    sum_err, supp_err, range_err, cpou = 0.0, 0.0, 0.0, 0.0
    union = [b for b in system.boxes]
    for pts in _audit_points(region, per_axis):
        total = np.zeros(pts.shape[0])
        in_union = np.zeros(pts.shape[0], bool)
        for b in union:
            in_union |= b.contains_closed(pts)
        for i, idx, d in system.theta_derivs(pts, order):
            th = d[0]
            total[idx] += th
            range_err = max(range_err, float(np.max(np.maximum(-th, th - 1.0), initial=0.0)))
            outside = ~system.supports[i].contains_closed(pts[idx])
            if outside.any():
                supp_err = max(supp_err, float(np.max(np.abs(th[outside]))))
            delta = float(system.boxes[i].sides[0])
            scaled = np.abs(d) * (delta ** degs)[:, None]
            cpou = max(cpou, float(scaled.max()))
        if in_union.any():
            sum_err = max(sum_err, float(np.max(np.abs(total[in_union] - 1.0))))
    return {"partition_error": sum_err, "support_error": supp_err, "range_error": range_err, "C_pou": cpou}


# ---------------------------------------------------------------------------
# gluing


class GluedFunction:
    """theta F + (1 - theta) P with theta = 1 on Q and supported in (1 + eta) Q."""

    def __init__(self, F, P: Jet, Q: Box, eta: float, m: int | None = None):
        if not (0.001 <= eta <= 100):
            raise ValueError("eta must lie in [0.001, 100]")
        self.F, self.P, self.Q, self.eta = F, P, Q, eta
        self.m = m if m is not None else P.m
        self.n = Q.n
        self.margins = 0.5 * eta * Q.sides

    def theta(self, pts, order=0):
        return bump_derivs(self.Q, pts, order, self.m, margins=self.margins)

    def __call__(self, pts) -> np.ndarray:
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        th = self.theta(pts)[0]
        return th * self.F(pts) + (1 - th) * self.P(pts)

    def derivs(self, pts, order: int) -> np.ndarray:
        """All derivatives up to ``order`` (needs F.derivs or F.derivative)."""
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        alphas, table = leibniz_table(order, self.n)
        th = self.theta(pts, order)
        Fd = evaluate_derivs(self.F, pts, order)
        from .jets import monomial_derivs

        Pd = monomial_derivs(pts, self.P.m, self.n, alphas=alphas, center=self.P.center) @ self.P.coeffs
        G = Fd - Pd
        out = np.zeros((len(alphas), pts.shape[0]))
        for i, _ in enumerate(alphas):
            for bi, ri, c in table[i]:
                out[i] += c * th[bi] * G[ri]
        return out + Pd


def evaluate_derivs(F, pts, order: int) -> np.ndarray:
    """Derivatives of an evaluable for all multi-indices up to ``order``."""
    n = pts.shape[1]
    alphas = all_multi_indices(order, n)
    if hasattr(F, "derivs"):
        return F.derivs(pts, order)
    if hasattr(F, "derivative"):
        return np.array([F.derivative(pts, a) for a in alphas])
    if isinstance(F, Jet):
        from .jets import monomial_derivs

        return monomial_derivs(pts, F.m, n, alphas=alphas, center=F.center) @ F.coeffs
    if order == 0:
        return np.reshape(F(pts), (1, -1))
    raise TypeError("evaluable does not provide derivatives")


def glue(F, P: Jet, Q: Box, eta: float) -> GluedFunction:
    return GluedFunction(F, P, Q, eta)
