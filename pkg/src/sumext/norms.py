"""Norm machinery that does not go through the operator: a packing estimator of the
Sobolev seminorm, the Whitney-field seminorm, the K-functional curve and overlap counting."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .config import Config, default_config
from .jets import Jet, jet_norm, monomial_derivs, multi_indices
from .measures import AtomicMeasure, Box
from .oracle import _gauss, j_norm


# ---------------------------------------------------------------------------
# packing estimator


def _nodes(q: int, n: int):
    """Tensor Gauss rule on [0,1]^n: points (q^n, n), weights (q^n,)."""
    x, w = _gauss(q)
    x, w = 0.5 * (x + 1), 0.5 * w
    if n == 1:
        return x.reshape(-1, 1), w
    X, Y = np.meshgrid(x, x, indexing="ij")
    WX, WY = np.meshgrid(w, w, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), (WX * WY).ravel()


def _fit_errors(vals, V, w, p, iters=60):
    """Best degree-(m-1) L^p(w) fit error per row of vals (cells, q); V (q, D) basis."""
    if p == 2:
        sw = np.sqrt(w)
        Q, _ = np.linalg.qr(sw[:, None] * V)
        r = sw * vals - (sw * vals) @ Q @ Q.T
        return np.sqrt(np.sum(r**2, axis=1))
    coef = np.linalg.lstsq(np.sqrt(w)[:, None] * V, (np.sqrt(w) * vals).T, rcond=None)[0].T
    for _ in range(iters):
        r = vals - coef @ V.T
        scale = np.maximum(np.max(np.abs(r), axis=1, keepdims=True), 1e-300)
        wt = w * np.maximum(np.abs(r) / scale, 1e-8) ** (p - 2)
        G = np.einsum("cq,qi,qj->cij", wt, V, V)
        b = np.einsum("cq,qi,cq->ci", wt, V, vals)
        G += 1e-14 * np.trace(G, axis1=1, axis2=2)[:, None, None] * np.eye(V.shape[1])
        coef = np.linalg.solve(G, b[..., None])[..., 0]
    r = vals - coef @ V.T
    return np.sum(w * np.abs(r) ** p, axis=1) ** (1.0 / p)


@lru_cache(maxsize=None)
def calibration(m: int, n: int, p: float, q: int = 24) -> float:
    """Fit error of x_1^m / m! on the unit cube: the estimator value per unit of seminorm."""
    pts, w = _nodes(q, n)
    V = monomial_derivs(pts, m, n, alphas=((0,) * n,), center=np.zeros(n))[0]
    vals = pts[:, 0] ** m / math.factorial(m)
    return float(_fit_errors(vals[None, :], V, w, p)[0])


@dataclass
class PackingSweep:
    levels: list = field(default_factory=list)  # level, cells used, raw value
    raw: float = 0.0
    calibration: float = 1.0

    @property
    def value(self) -> float:
        return self.raw / self.calibration

    def to_json(self):
        return {"levels": self.levels, "raw": self.raw, "calibration": self.calibration, "value": self.value}


def packing_sweep(F, Q: Box, m: int, p: float, max_level: int = 40, min_full_side: float = 2.0**-10,
                  focus=None, q: int | None = None, focus_ratio: float = 64.0, budget: int = 4096) -> PackingSweep:
    """Dyadic grid packings of Q.

    A cell of side s is used when s >= min_full_side, or when it meets a focus box whose
    side is at most focus_ratio * s.  The used cells of one level form a sub-packing, so
    each level still gives a lower bound for the full-grid value.  ``budget`` caps the
    number of focus cells evaluated per level.
    """
    n = Q.n
    q = q or max(2 * m, m + 6)
    pts, w = _nodes(q, n)
    V = monomial_derivs(pts, m, n, alphas=((0,) * n,), center=np.zeros(n))[0]
    side = float(Q.sides[0])
    focus = [] if focus is None else list(focus)
    out = PackingSweep(calibration=calibration(m, n, float(p)))
    for level in range(max_level + 1):
        g = 2**level
        s = side / g
        if s >= min_full_side * (1 - 1e-12):
            if g**n > 2**22:
                break
            grids = [np.arange(g)] * n
            cells = np.array(list(itertools.product(*grids)), float) if n > 1 else np.arange(g, dtype=float)[:, None]
        else:
            near = [b for b in focus if float(b.sides.max()) <= focus_ratio * s]
            if not near:
                break
            cells = set()
            for b in near:
                lo = np.floor((b.lo_arr - Q.lo_arr) / s).astype(int)
                hi = np.ceil((b.hi_arr - Q.lo_arr) / s).astype(int)
                lo, hi = np.clip(lo, 0, g - 1), np.clip(hi, 1, g)
                for c in itertools.product(*[range(a, z) for a, z in zip(lo, hi)]):
                    cells.add(c)
                    if len(cells) >= budget:
                        break
                if len(cells) >= budget:
                    break
            if not cells:
                break
            cells = np.array(sorted(cells), float)
        corner = Q.lo_arr + s * cells
        X = (corner[:, None, :] + s * pts[None, :, :]).reshape(-1, n)
        vals = np.asarray(F(X), float).reshape(cells.shape[0], -1)
        E = _fit_errors(vals, V, w * s**n, p)
        raw = float(np.sum((E / s**m) ** p) ** (1.0 / p))
        out.levels.append({"level": level, "cells": int(cells.shape[0]), "raw": raw})
        out.raw = max(out.raw, raw)
    return out


def brudnyi_estimate(F, Q: Box, m: int, p: float, **kw) -> float:
    """Sup over dyadic grid packings of (sum (E(F,cell)/side^m)^p)^{1/p}, divided by the
    value the same formula gives for x^m/m! on a unit cube (so that x^2 with m = 2 gives 2)."""
    return packing_sweep(F, Q, m, p, **kw).value


# ---------------------------------------------------------------------------
# Whitney fields


def whitney_seminorm(points, jets, p: float) -> float:
    """max over pairs of |P_x - P_y|_{x,|x-y|}; +inf when coincident points carry different jets."""
    pts = np.reshape(np.asarray(points, float), (len(jets), -1))
    if len(jets) < 2:
        raise ValueError("a Whitney field needs at least two points")
    best = 0.0
    for i in range(len(jets)):
        for j in range(len(jets)):
            if i == j:
                continue
            d = float(np.linalg.norm(pts[i] - pts[j]))
            diff = jets[i] - jets[j]
            if d == 0:
                if not np.allclose(diff.derivatives(pts[i]), 0.0, atol=1e-12):
                    return math.inf
                continue
            best = max(best, jet_norm(diff, pts[i], d, p))
    return best


# ---------------------------------------------------------------------------
# K-functional


def k_curve(f, measure: AtomicMeasure, ts, cfg: Config | None = None, linearized: bool = False):
    """[(t, K(t), extra)] with K(t) = ||f||_{J(scale(mu, t))}.

    With linearized=True the operator is built on each scaled measure and the ratio
    ||Tf|| / K(t) is reported in extra."""
    cfg = cfg or default_config(n=measure.n)
    f = np.asarray(f, float)
    rows = []
    for t in ts:
        mu_t = measure.scale(float(t), cfg.p)
        K = j_norm(f, mu_t, cfg) ** (1.0 / cfg.p)
        extra = {}
        if linearized and len(measure) > 1:
            from .extension import top_extend

            res = top_extend(mu_t, cfg)
            tn = res.tf_norm(f)
            extra = {"Tf_norm": tn, "ratio": tn / K if K > 0 else (1.0 if tn == 0 else math.inf)}
        rows.append((float(t), float(K), extra))
    return rows


def lp_norm(f, measure: AtomicMeasure, p: float) -> float:
    f = np.asarray(f, float)
    w = measure.weights
    if np.any(np.isinf(w) & (f != 0)):
        return math.inf
    fin = np.isfinite(w)
    return float(np.sum(w[fin] * np.abs(f[fin]) ** p) ** (1.0 / p))


def k_curve_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf)
    wr.writerow(["t", "K"])
    for t, K, _ in rows:
        wr.writerow([repr(t), repr(K)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# overlap


def _as_box(s) -> Box:
    if isinstance(s, Box):
        return s
    x = np.reshape(np.asarray(s, float), -1)
    return Box(x, x)


def _sweep_1d(lo, hi) -> int:
    # closed intervals: at equal coordinates openings come before closings
    ev = sorted([(a, 0) for a in lo] + [(b, 1) for b in hi])
    cur = best = 0
    for _, kind in ev:
        cur += 1 if kind == 0 else -1
        best = max(best, cur)
    return best


def overlap_audit(supports) -> int:
    """Largest number of closed supports sharing a point (boxes, or points as degenerate boxes)."""
    boxes = [_as_box(s) for s in supports]
    if not boxes:
        return 0
    lo = np.array([b.lo for b in boxes])
    hi = np.array([b.hi for b in boxes])
    if lo.shape[1] == 1:
        return _sweep_1d(lo[:, 0], hi[:, 0])
    best = 0
    for x in np.unique(lo[:, 0]):
        on = (lo[:, 0] <= x) & (x <= hi[:, 0])
        if on.sum() > best:
            best = max(best, _sweep_1d(lo[on, 1], hi[on, 1]))
    return best
