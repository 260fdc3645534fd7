"""The recursive extension operator T, the functional M, and the Omega ledger.

Everything is carried symbolically: jets and spline coefficients are ``Lin`` expressions
over the atom data 'f', the top anchor 'P0', and one block per keystone jet.  Once the
recursion is finished the anchor is chosen by the linear selector (P0 = Xi f), and every
expression resolves to a matrix acting on f.  Hence T is linear in f by construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import linmap
from .config import Config, ConfigError, default_config
from .dyadic import CZTree, cz_decompose
from .jets import (
    Jet,
    all_multi_indices,
    derivative_matrix,
    full_label,
    jet_dim,
    label_to_json,
    monomial_derivs,
    monotonic_labels,
    multi_indices,
    norm_weights,
    scaled_taylor_matrix,
    top_order_indices,
)
from .linexpr import Blocks, Lin
from .measures import AtomicMeasure, Box, unit_box
from .oracle import SolveSpec, anchor_values, ok_test, quadratic_solution, _gauss
from .pou import BumpSystem, bump_derivs, leibniz_table

log = logging.getLogger(__name__)

KEYSTONE_REACH = 100.0  # keystone jets see the cubes whose 1.1-dilates meet 100 Q_s
FRAME_PLATEAU = 0.5  # the outer cutoff is 1 on the central half of each frame


# ---------------------------------------------------------------------------
# evaluation nodes


def _lin_derivs(md: np.ndarray, lin: Lin) -> Lin:
    """md: (n_alpha, npts, D) basis derivatives; lin: (D,) coefficient expression."""
    return Lin({k: np.tensordot(md, v, axes=(2, 0)) for k, v in lin.terms.items()})


def _leibniz(th: np.ndarray, T: Lin, order: int, n: int) -> Lin:
    """Derivatives of theta * T from derivative arrays of both factors."""
    alphas, table = leibniz_table(order, n)
    out = {}
    for k, v in T.terms.items():
        o = np.zeros_like(v)
        for i in range(len(alphas)):
            for bi, ri, c in table[i]:
                o[i] += (c * th[bi])[:, None] * v[ri]
        out[k] = o
    return Lin(out)


class Node:
    lin: Lin
    resolved: Lin | None = None

    def _coef(self, resolved: bool) -> Lin:
        return self.resolved if resolved else self.lin

    def breaks(self, box: Box) -> list:
        return [[] for _ in range(box.n)]


class PolyNode(Node):
    def __init__(self, lin: Lin, m: int, n: int):
        self.lin, self.m, self.n = lin, m, n

    def eval(self, pts, order: int, resolved: bool = True) -> Lin:
        md = monomial_derivs(pts, self.m, self.n, alphas=all_multi_indices(order, self.n))
        return _lin_derivs(md, self._coef(resolved))

    def children(self):
        return []


class SplineNode(Node):
    def __init__(self, space, lin: Lin, m: int):
        self.space, self.lin, self.m, self.n = space, lin, m, space.n

    def eval(self, pts, order: int, resolved: bool = True) -> Lin:
        alphas = all_multi_indices(order, self.n)
        md = np.stack([self.space.basis(pts, a) for a in alphas])
        return _lin_derivs(md, self._coef(resolved))

    def breaks(self, box: Box) -> list:
        out = []
        for d in range(self.n):
            b = self.space.breakpoints(d)
            out.append(list(b[(b >= box.lo[d]) & (b <= box.hi[d])]))
        return out

    def children(self):
        return []


class PatchNode(Node):
    """theta_frame * sum_i theta_i T_i + (1 - theta_frame) P0."""

    def __init__(self, frame: Box, anchor: PolyNode, boxes, kids, m: int):
        self.frame, self.anchor, self.kids, self.m = frame, anchor, list(kids), m
        self.n = frame.n
        self.pou = BumpSystem(boxes, m)
        self.inner = frame.dilate(FRAME_PLATEAU)
        self.margins = 0.5 * (frame.sides - self.inner.sides)
        self.lin = anchor.lin

    def eval(self, pts, order: int, resolved: bool = True) -> Lin:
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        npts = pts.shape[0]
        nal = len(all_multi_indices(order, self.n))
        P = self.anchor.eval(pts, order, resolved)
        acc = {}
        for i, idx, th in self.pou.theta_derivs(pts, order):
            Ti = self.kids[i].eval(pts[idx], order, resolved)
            prod = _leibniz(th, Ti, order, self.n)
            for k, v in prod.terms.items():
                if k not in acc:
                    acc[k] = np.zeros((nal, npts, v.shape[-1]))
                acc[k][:, idx] += v
        Sigma = Lin(acc)
        phi = bump_derivs(self.inner, pts, order, self.m, margins=self.margins)
        return _leibniz(phi, Sigma - P, order, self.n) + P

    def breaks(self, box: Box) -> list:
        out = []
        for d in range(self.n):
            cand = [self.frame.lo[d], self.inner.lo[d], self.inner.hi[d], self.frame.hi[d]]
            out.append([c for c in cand if box.lo[d] <= c <= box.hi[d]])
        for b, s, kid in zip(self.pou.boxes, self.pou.supports, self.kids):
            inter = s.intersect(box)
            if inter is None:
                continue
            for d in range(self.n):
                for c in (b.lo[d], b.hi[d], s.lo[d], s.hi[d]):
                    if box.lo[d] <= c <= box.hi[d]:
                        out[d].append(c)
            for d, extra in enumerate(kid.breaks(inter)):
                out[d].extend(extra)
        return out

    def children(self):
        return [self.anchor] + self.kids


def _walk(node):
    yield node
    for c in node.children():
        yield from _walk(c)


# ---------------------------------------------------------------------------
# records


@dataclass
class TermRows:
    """Rows of the M functional: value = sum |rows . z|^p over the rows."""

    kind: str  # "zeta" (atom misfit), "psi_seminorm", "psi_anchor", "jet_diff", "anchor"
    lin: Lin
    where: str = ""


@dataclass
class FunctionalRecord:
    id: str
    kind: str  # "xi", "keystone", "point"
    support: Box
    coeffs: np.ndarray  # over atom values

    def __call__(self, f) -> float:
        return float(self.coeffs @ np.asarray(f, float))

    def to_json(self):
        return {"id": self.id, "kind": self.kind, "support": self.support.to_json(),
                "coeffs": [float(c) for c in self.coeffs]}


class Context:
    def __init__(self, measure: AtomicMeasure, cfg: Config):
        self.measure = measure
        self.cfg = cfg
        self.m, self.n, self.p = cfg.m, cfg.n, cfg.p
        self.D = jet_dim(cfg.m, cfg.n)
        self.N = len(measure)
        self.x = measure.locations
        self.w = measure.weights
        self.blocks = Blocks(self.N, self.D)
        self.trees = []
        self.events = []
        self.point_atoms = set()
        self.local_cfg = cfg.with_(p=2.0, oracle="exact" if cfg.n == 1 else "irls")
        self.keystone_cfg = self.local_cfg.with_(grid2=max(4, cfg.grid2 // 2))
        self.labels = monotonic_labels(cfg.m, cfg.n)
        self.full = full_label(cfg.m, cfg.n)

    def height(self, A) -> int:
        return self.labels.index(A)

    def f_rows(self, idx_local, coeffs) -> Lin:
        """Rows acting on global atom values: coeffs (r, len(idx_local))."""
        M = np.zeros((coeffs.shape[0], self.N))
        M[:, idx_local] = coeffs
        return Lin({"f": M})


def _norm_rows(ctx: Context, J: Lin, x, delta: float) -> Lin:
    """Rows whose p-th powers sum to |J|^p_{x,delta}."""
    Dx = derivative_matrix(x, ctx.m, ctx.n)
    w = norm_weights(delta, ctx.m, ctx.n, ctx.p) ** (1.0 / ctx.p)
    return J.left(w[:, None] * Dx)


# ---------------------------------------------------------------------------
# local operators


def base_case(ctx: Context, idx: np.ndarray, P0: Lin):
    """T = P0; M-terms P0(x_j) - f_j at the atoms."""
    node = PolyNode(P0, ctx.m, ctx.n)
    rows = []
    if idx.size:
        if np.any(np.isinf(ctx.w[idx])):
            raise AssertionError("base case reached with an exact-interpolation atom")
        vals = monomial_derivs(ctx.x[idx], ctx.m, ctx.n, alphas=((0,) * ctx.n,))[0]
        s = ctx.w[idx] ** (1.0 / ctx.p)
        lin = P0.left(s[:, None] * vals) - ctx.f_rows(idx, np.diag(s))
        rows.append(TermRows("zeta", lin, "base"))
    return node, rows


def oracle_leaf(ctx: Context, idx: np.ndarray, R: Lin, dom: Box, delta: float, pins=()):
    """Local minimizer of the anchored J-functional on dom, linear in (f, R).

    pins: (point, derivative rows, pin_value) triples; the minimizer's derivatives of order
    < m at the point are forced to the given rows.  The value is left free when pin_value
    is False or an exact atom sits on the point.
    """
    cfg = ctx.local_cfg
    m, n, p = ctx.m, ctx.n, ctx.p
    center = dom.center
    alphas = multi_indices(m, n)
    jets, targets = [], []
    for pt, rows_d, pin_value in pins:
        pt = np.reshape(np.asarray(pt, float), n)
        on_atom = np.any(np.all(ctx.x[idx] == pt, axis=1) & np.isinf(ctx.w[idx]))
        free = on_atom or not pin_value
        keep = [k for k, a in enumerate(alphas) if not (free and sum(a) == 0)]
        if not keep:
            continue
        jets.append((pt, tuple(alphas[k] for k in keep)))
        targets.append(rows_d.left(np.eye(len(alphas))[keep]))
    spec = SolveSpec(m, n, 2.0, ctx.x[idx], ctx.w[idx], domain=dom, anchor_delta=delta,
                     anchor_center=tuple(center), anchor_scale=delta, jets=jets)
    qs = quadratic_solution(spec, cfg)
    S = scaled_taylor_matrix(center, delta, m, n)
    Nl = idx.size
    Cf = qs.Cmap[:, :Nl]
    Ca = qs.Cmap[:, Nl : Nl + ctx.D]
    coef = ctx.f_rows(idx, Cf) + R.left(Ca @ S)
    col = spec.off_targets
    for T in targets:
        r = T.shape[0]
        coef = coef + T.left(qs.Cmap[:, col : col + r])
        col += r
    node = SplineNode(qs.space, coef, m)
    ctx.point_atoms.update(int(i) for i in idx)
    rows = []
    zero = (0,) * n
    fin = np.isfinite(ctx.w[idx])
    if fin.any():
        li = idx[fin]
        B = qs.space.basis(ctx.x[li], zero)
        s = ctx.w[li] ** (1.0 / p)
        rows.append(TermRows("zeta", coef.left(s[:, None] * B) - ctx.f_rows(li, np.diag(s)), "leaf"))
    qp, qw = qs.space.quadrature()
    for a in top_order_indices(m, n):
        Ba = qs.space.basis(qp, a)
        rows.append(TermRows("psi_seminorm", coef.left(qw[:, None] ** (1.0 / p) * Ba), "leaf"))
    B0 = qs.space.basis(qp, zero)
    Av = anchor_values(qp, m, n, center, delta) @ S
    c = (qw / delta ** (m * p)) ** (1.0 / p)
    rows.append(TermRows("psi_anchor", coef.left(c[:, None] * B0) - R.left(c[:, None] * Av), "leaf"))
    return node, rows


def _factor_psd(V: np.ndarray, rel: float = 1e-14) -> np.ndarray:
    """Rows L with L^T L = V (up to dropped tiny eigenvalues)."""
    lam, U = np.linalg.eigh(0.5 * (V + V.T))
    top = max(float(lam.max(initial=0.0)), 0.0)
    keep = lam > rel * top if top > 0 else np.zeros_like(lam, bool)
    return (np.sqrt(lam[keep])[:, None] * U[:, keep].T)


def keystone_jet(ctx: Context, tree: CZTree, s: int, idx: np.ndarray, P0: Lin, A) -> Lin:
    """Jet R'_s, linear in (f, P0): joint near-minimizer over the cubes near Q_s.

    Unknowns are one jet P^j per cube whose 1.1-dilate meets 100 Q_s.  Terms: the anchored
    J-functional of each P^j on D_j = 1.1 Q_j cap 100 Q_s, and all pairwise jet differences
    |P^j - P^j'|_{x_j, delta_j}.  Coherence: d^a P^s(x_s) = d^a P0(x_s) for a in A.
    Jets are parametrized in u = (x - x_s) / delta_s.
    """
    m, n, p, D = ctx.m, ctx.n, ctx.p, ctx.D
    cfg = ctx.keystone_cfg
    Qs = tree.boxes[s]
    xs, ds = Qs.center, tree.side(s)
    reach = Qs.dilate(KEYSTONE_REACH)
    members, domains = [], []
    for j, b in enumerate(tree.boxes):
        dj = b.dilate(1.1).intersect(reach)
        if dj is not None:
            members.append(j)
            domains.append(dj)
    pos = {j: k for k, j in enumerate(members)}
    k_tot = D * len(members)
    q = ctx.N + D  # v = [f ; P0 coefficients]
    rows_w, rows_v = [], []
    for k, (j, dj) in enumerate(zip(members, domains)):
        li = idx[dj.contains(ctx.x[idx])]
        spec = SolveSpec(m, n, 2.0, ctx.x[li], ctx.w[li], domain=dj, anchor_delta=tree.side(j),
                         anchor_center=tuple(xs), anchor_scale=ds)
        qs = quadratic_solution(spec, cfg)
        L = _factor_psd(qs.V)
        if L.shape[0] == 0:
            continue
        Aw = np.zeros((L.shape[0], k_tot))
        Aw[:, k * D : (k + 1) * D] = L[:, li.size : li.size + D]
        Bv = np.zeros((L.shape[0], q))
        Bv[:, li] = L[:, : li.size]
        rows_w.append(Aw)
        rows_v.append(Bv)
    udeg = np.array([sum(a) for a in multi_indices(m, n)], float)
    for j in members:
        xj = tree.center(j)
        uj = (xj - xs) / ds
        Du = derivative_matrix(uj, m, n) * (ds ** -udeg)[:, None]
        wt = norm_weights(tree.side(j), m, n, p) ** 0.5
        Mj = wt[:, None] * Du
        for j2 in members:
            if j2 == j:
                continue
            Aw = np.zeros((D, k_tot))
            Aw[:, pos[j] * D : (pos[j] + 1) * D] = Mj
            Aw[:, pos[j2] * D : (pos[j2] + 1) * D] = -Mj
            rows_w.append(Aw)
            rows_v.append(np.zeros((D, q)))
    alphas = multi_indices(m, n)
    Aw = np.vstack(rows_w) if rows_w else np.zeros((0, k_tot))
    Bv = np.vstack(rows_v) if rows_v else np.zeros((0, q))
    coh = [a for a in alphas if a in A]
    Psi_w = Psi_v = None
    if coh:
        Du0 = derivative_matrix(np.zeros(n), m, n)
        Dx = derivative_matrix(xs, m, n)
        Psi_w = np.zeros((len(coh), k_tot))
        Psi_v = np.zeros((len(coh), q))
        for r, a in enumerate(coh):
            ai = alphas.index(a)
            Psi_w[r, pos[s] * D : (pos[s] + 1) * D] = Du0[ai]
            Psi_v[r, ctx.N :] = -(ds ** sum(a)) * Dx[ai]
    prob = linmap.BlockProblem(Aw, Bv, np.ones(Aw.shape[0]), 2.0, Psi_w, Psi_v)
    Xi = linmap.select_constrained_map(prob, "joint")
    u_map = Xi[pos[s] * D : (pos[s] + 1) * D]  # (D, q): u-coefficients of R'_s
    Sinv = np.linalg.inv(scaled_taylor_matrix(xs, ds, m, n))
    G = Sinv @ u_map
    return Lin({"f": G[:, : ctx.N]}) + P0.left(G[:, ctx.N :])


def _shared_end(tree: CZTree, i: int, j: int):
    """Point where Q_i and Q_j touch end to end (n = 1), or None."""
    b, c = tree.boxes[i], tree.boxes[j]
    if np.isclose(c.hi[0], b.lo[0]):
        return b.lo[0]
    if np.isclose(c.lo[0], b.hi[0]):
        return b.hi[0]
    return None


def end_jet(ctx: Context, tree: CZTree, i: int, j: int, pt: float, R: dict, idx: np.ndarray) -> Lin:
    """Derivative rows (orders < m) at the end shared by Q_i and Q_j.

    The mean of the two keystone jets moved toward the data: the local minimizer on both
    cubes dilated by cfg.pin_window, anchored to that mean at the larger side, read off at
    the end.  Keystone jets can sit far from the data around a small cube; pinning to
    them outright forces a leaf to swing back within one side.
    """
    m, n = ctx.m, ctx.n
    H = (R[tree.kappa[i]] + R[tree.kappa[j]]) * 0.5
    at = np.array([pt])
    if ctx.cfg.pin_window == 0:
        return H.left(derivative_matrix(at, m, n))
    a, b = tree.boxes[i].dilate(ctx.cfg.pin_window), tree.boxes[j].dilate(ctx.cfg.pin_window)
    dom = Box((min(a.lo[0], b.lo[0]),), (max(a.hi[0], b.hi[0]),))
    li = idx[dom.contains(ctx.x[idx])]
    delta = max(tree.side(i), tree.side(j))
    spec = SolveSpec(m, n, 2.0, ctx.x[li], ctx.w[li], domain=dom, anchor_delta=delta,
                     anchor_center=(pt,), anchor_scale=delta)
    qs = quadratic_solution(spec, ctx.local_cfg)
    S = scaled_taylor_matrix(at, delta, m, n)
    Bd = np.stack([qs.space.basis(at.reshape(1, n), (k,))[0] for k in range(m)])
    C = Bd @ qs.Cmap
    return ctx.f_rows(li, C[:, : li.size]) + H.left(C[:, li.size : li.size + ctx.D] @ S)


def _end_pins(ctx: Context, tree: CZTree, i: int, shared) -> list:
    """(point, derivative rows, pin_value) for every end of Q_i shared with a neighbour."""
    if ctx.n != 1 or not ctx.cfg.pin_leaves:
        return []
    out = []
    for j in tree.neighbors[i]:
        pt = _shared_end(tree, i, j)
        if pt is not None:
            out.append((np.array([pt]), shared(i, j, pt), True))
    return out


def extend_local(ctx: Context, idx: np.ndarray, P0: Lin, A, frame: Box, path: str = "", depth: int = 0):
    """Operator for the atoms idx with anchor P0 and label A; returns (node, M rows)."""
    cfg = ctx.cfg
    if A == ctx.full:
        return base_case(ctx, idx, P0)
    if depth > cfg.max_recursion:
        raise ConfigError("recursion depth exceeded; check eps and leaf_height")
    sub = ctx.measure.select(idx)
    ok, wit = ok_test(frame, A, sub, cfg)
    if ok:
        ctx.events.append({"path": path, "event": "delegate", "from": label_to_json(A), "to": label_to_json(wit)})
        return extend_local(ctx, idx, P0, wit, frame, path, depth)
    tree = cz_decompose(sub, A, cfg, frame)
    ctx.trees.append((path, tree))
    ctx.events.append({"path": path, "event": "decompose", "label": label_to_json(A), "cubes": len(tree)})
    R = {}
    for s in tree.keystones:
        defn = keystone_jet(ctx, tree, s, idx, P0, A)
        R[s] = ctx.blocks.add(f"R{path}/{s}", defn, support=tree.boxes[s].dilate(KEYSTONE_REACH), path=path, cube=s)
    built, ends = {}, {}

    def shared(i, j, pt):
        key = (min(i, j), max(i, j))
        if key not in ends:
            ends[key] = end_jet(ctx, tree, i, j, pt, R, idx)
        return ends[key]

    def build(i):
        if i in built:
            return built[i]
        box = tree.boxes[i]
        Ri = R[tree.kappa[i]]
        dom = box.dilate(1.1)
        sidx = idx[dom.contains(ctx.x[idx])]
        lab = tree.labels[i]
        pins = _end_pins(ctx, tree, i, shared)
        if not tree.terminal[i] and lab == ctx.full and not pins:
            out = base_case(ctx, sidx, Ri)
        elif tree.terminal[i] or lab == ctx.full or ctx.height(lab) <= cfg.leaf_height:
            out = oracle_leaf(ctx, sidx, Ri, dom, tree.side(i), pins)
        else:
            out = extend_local(ctx, sidx, Ri, lab, box.dilate(11.0), f"{path}/{i}", depth + 1)
        built[i] = out
        return out

    kids, rows = [], []
    for i in range(len(tree)):
        node, r = build(i)
        kids.append(node)
        rows.extend(r)
    for i, nb in enumerate(tree.neighbors):
        for j in nb:
            if tree.kappa[i] == tree.kappa[j]:
                continue
            rows.append(TermRows("jet_diff", _norm_rows(ctx, R[tree.kappa[i]] - R[tree.kappa[j]], tree.center(i), tree.side(i)), path))
    # the outer cutoff blends the patch into P0 across the frame's collar; each cube
    # reaching into it pays |R_i - P0| at the collar width
    inner = frame.dilate(FRAME_PLATEAU)
    margin = float(np.min(0.5 * (frame.sides - inner.sides)))
    for i, box in enumerate(tree.boxes):
        if np.any(box.lo_arr < inner.lo_arr) or np.any(box.hi_arr > inner.hi_arr):
            rows.append(TermRows("anchor", _norm_rows(ctx, R[tree.kappa[i]] - P0, tree.center(i), margin), path))
    node = PatchNode(frame, PolyNode(P0, ctx.m, ctx.n), tree.boxes, kids, ctx.m)
    return node, rows


# ---------------------------------------------------------------------------
# the assembled operator


class ExtensionResult:
    def __init__(self, ctx: Context, node: Node, rows: list):
        self.ctx = ctx
        self.measure = ctx.measure
        self.cfg = ctx.cfg
        self.node = node
        self.rows = rows
        self.blocks = ctx.blocks
        self.m, self.n, self.p = ctx.m, ctx.n, ctx.p
        self.trees = ctx.trees
        self.events = ctx.events
        res = ctx.blocks.resolve_to(("f", "P0"))
        dims = ctx.blocks.dims
        allrows = Lin.stack([r.lin for r in rows], dims) if rows else Lin()
        Af = ctx.blocks.realize(allrows, res, "f") if rows else np.zeros((0, ctx.N))
        Ap = ctx.blocks.realize(allrows, res, "P0") if rows else np.zeros((0, ctx.D))
        if Ap.shape[0] == 0 or not np.any(Ap):
            self.Xi = np.zeros((ctx.D, ctx.N))
        elif ctx.p == 2:
            self.Xi = linmap.joint_lstsq_map(Ap, Af, np.ones(Ap.shape[0]))
        else:
            self.Xi = linmap.sequential_map(Ap, Af, np.ones(Ap.shape[0]), ctx.p)
        self.resolved = {}
        for b, parts in res.items():
            fpart = parts.get("f", np.zeros((ctx.blocks.dims[b], ctx.N)))
            ppart = parts.get("P0", np.zeros((ctx.blocks.dims[b], ctx.D)))
            self.resolved[b] = fpart + ppart @ self.Xi
        self._row_mats = [(r.kind, self._realize(r.lin)) for r in rows]
        for nd in _walk(node):
            nd.resolved = self._to_f(nd.lin)
        self.functionals = self._ledger()

    # -- symbolic helpers
    def _realize(self, lin: Lin) -> np.ndarray:
        out = None
        for k, v in lin.terms.items():
            part = v @ self.resolved[k]
            out = part if out is None else out + part
        return out if out is not None else np.zeros(lin.shape + (self.ctx.N,))

    def _to_f(self, lin: Lin) -> Lin:
        return Lin({"f": self._realize(lin)})

    # -- evaluation
    def derivs(self, f, pts, order: int) -> np.ndarray:
        """All derivatives of Tf up to ``order`` at pts: array (n_alpha, npts)."""
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        ev = self.node.eval(pts, order, True)
        if "f" not in ev.terms:
            return np.zeros((len(all_multi_indices(order, self.n)), pts.shape[0]))
        return ev.terms["f"] @ np.asarray(f, float)

    def __call__(self, f, pts) -> np.ndarray:
        return self.derivs(f, pts, 0)[0]

    def evaluate(self, f, pts) -> np.ndarray:
        return self(f, pts)

    def jet(self, f, y) -> Jet:
        d = self.derivs(f, np.reshape(y, (1, self.n)), self.m - 1)[:, 0]
        return Jet.from_derivatives(d, y, self.m, self.n)

    def xi(self, f) -> Jet:
        return Jet(self.m, self.n, self.Xi @ np.asarray(f, float))

    # -- M functional
    def m_terms(self, f) -> dict:
        f = np.asarray(f, float)
        out = {}
        for kind, M in self._row_mats:
            out.setdefault(kind, []).append(M @ f)
        return {k: np.concatenate(v) for k, v in out.items()}

    def m_value(self, f) -> float:
        terms = self.m_terms(f)
        tot = sum(float(np.sum(np.abs(v) ** self.p)) for v in terms.values())
        return tot ** (1.0 / self.p)

    # -- the J norm of Tf
    def _integration_cells(self):
        """Boxes on which Tf is piecewise smooth enough for composite Gauss rules."""
        frame = unit_box(self.n) if not isinstance(self.node, PatchNode) else self.node.frame
        if self.n == 1 or not isinstance(self.node, PatchNode):
            return [frame]
        return list(self.node.pou.boxes)

    def seminorm_p(self, f, q: int | None = None) -> float:
        """||Tf||^p_{L^{m,p}(R^n)} by composite Gauss between all breakpoints (Tf = P0 off the frame)."""
        if not isinstance(self.node, PatchNode):
            return 0.0
        q = q or (12 if self.n == 1 else 6)
        xg, wg = _gauss(q)
        tops = [all_multi_indices(self.m, self.n).index(a) for a in top_order_indices(self.m, self.n)]
        total = 0.0
        for cell in self._integration_cells():
            br = self.node.breaks(cell)
            axes_p, axes_w = [], []
            for d in range(self.n):
                b = np.unique(np.clip(np.array(br[d] + [cell.lo[d], cell.hi[d]]), cell.lo[d], cell.hi[d]))
                a0, a1 = b[:-1], b[1:]
                keep = a1 - a0 > 1e-300
                a0, a1 = a0[keep], a1[keep]
                mid, half = 0.5 * (a0 + a1), 0.5 * (a1 - a0)
                axes_p.append((mid[:, None] + half[:, None] * xg).ravel())
                axes_w.append((half[:, None] * wg).ravel())
            if self.n == 1:
                pts, wts = axes_p[0].reshape(-1, 1), axes_w[0]
            else:
                X, Y = np.meshgrid(*axes_p, indexing="ij")
                WX, WY = np.meshgrid(*axes_w, indexing="ij")
                pts, wts = np.column_stack([X.ravel(), Y.ravel()]), (WX * WY).ravel()
            for chunk in range(0, pts.shape[0], 20000):
                sl = slice(chunk, chunk + 20000)
                d = self.derivs(f, pts[sl], self.m)
                for t in tops:
                    total += float(np.sum(wts[sl] * np.abs(d[t]) ** self.p))
        return total

    def j_value(self, f) -> dict:
        """Parts of ||Tf||^p_{J(f, mu)}: seminorm, misfit at finite atoms, residual at exact atoms."""
        f = np.asarray(f, float)
        semi = self.seminorm_p(f)
        vals = self(f, self.measure.locations)
        fin = np.isfinite(self.measure.weights)
        misfit = float(np.sum(self.measure.weights[fin] * np.abs(vals[fin] - f[fin]) ** self.p))
        resid = float(np.max(np.abs(vals[~fin] - f[~fin]), initial=0.0))
        total = semi + misfit
        scale = 1.0 + float(np.max(np.abs(f), initial=0.0))
        if resid > 1e-9 * scale:
            total = math.inf
        return {"seminorm_p": semi, "misfit_p": misfit, "trace_residual": resid, "total_p": total,
                "norm": total ** (1.0 / self.p)}

    def tf_norm(self, f) -> float:
        return self.j_value(f)["norm"]

    # -- Omega ledger
    def _ledger(self) -> list:
        recs = []
        x = self.measure.locations
        hull = Box(x.min(axis=0), x.max(axis=0)) if len(x) else unit_box(self.n)
        for g in range(self.ctx.D):
            recs.append(FunctionalRecord(f"xi/{g}", "xi", hull, self.Xi[g].copy()))
        for name in self.blocks.order:
            fpart = self.blocks.defs[name].terms.get("f")
            if fpart is None:
                continue
            sup = self.blocks.meta[name]["support"]
            for g in range(fpart.shape[0]):
                recs.append(FunctionalRecord(f"{name}/{g}", "keystone", sup, fpart[g].copy()))
        for j in sorted(self.ctx.point_atoms):
            e = np.zeros(self.ctx.N)
            e[j] = 1.0
            recs.append(FunctionalRecord(f"point/{j}", "point", Box(x[j], x[j]), e))
        return recs

    def reconstruct_jet(self, f, y):
        """Derivatives at y rebuilt from the ledger functionals; returns (derivs, functionals used)."""
        f = np.asarray(f, float)
        y = np.reshape(np.asarray(y, float), (1, self.n))
        ev = self.node.eval(y, self.m - 1, False)
        E = {k: v[:, 0, :].copy() for k, v in ev.terms.items()}
        total = np.zeros(len(multi_indices(self.m, self.n)))
        used = 0
        tol = 0.0
        for name in reversed(self.blocks.order):
            if name not in E:
                continue
            coef = E.pop(name)
            defn = self.blocks.defs[name]
            nz = np.any(np.abs(coef) > tol, axis=0)
            if "f" in defn.terms:
                omega = defn.terms["f"] @ f
                total += coef @ omega
                used += int(nz.sum())
            for k, v in defn.terms.items():
                if k == "f":
                    continue
                E[k] = E[k] + coef @ v if k in E else coef @ v
        if "P0" in E:
            total += E["P0"] @ (self.Xi @ f)
            used += int(np.any(np.abs(E["P0"]) > tol, axis=0).sum())
        if "f" in E:
            total += E["f"] @ f
            used += int(np.any(np.abs(E["f"]) > tol, axis=0).sum())
        return total, used

    def omega_supports(self) -> list:
        return [r.support for r in self.functionals]

    def to_json(self, f, grid=None) -> dict:
        f = np.asarray(f, float)
        out = {
            "config": self.cfg.to_json(),
            "frame": self.measure.frame.to_json(),
            "decompositions": [{"path": pth, "tree": t.to_json()} for pth, t in self.trees],
            "events": self.events,
            "keystone_jets": {name: Jet(self.m, self.n, self.resolved[name] @ f).to_json() for name in self.blocks.order},
            "xi": self.xi(f).to_json(),
            "ledger": [r.to_json() for r in self.functionals],
            "M": {"value": self.m_value(f), "terms": {k: [float(t) for t in v] for k, v in self.m_terms(f).items()}},
        }
        if grid is not None:
            g = np.asarray(grid, float).reshape(-1, self.n)
            out["samples"] = {"x": g.tolist(), "Tf": [float(v) for v in self(f, g)]}
        return out


def top_extend(measure: AtomicMeasure, cfg: Config | None = None) -> ExtensionResult:
    """Build T for a normalized measure: recursion from the empty label on the unit cube,
    then P0 = xi(f) chosen by the linear selector over the M rows."""
    cfg = cfg or default_config(n=measure.n)
    if measure.n != cfg.n:
        raise ConfigError("measure dimension differs from cfg.n")
    ctx = Context(measure, cfg)
    P0 = Lin.block("P0", ctx.D)
    idx = np.arange(ctx.N)
    node, rows = extend_local(ctx, idx, P0, frozenset(), unit_box(cfg.n), "", 0)
    return ExtensionResult(ctx, node, rows)


def extend(measure: AtomicMeasure, f=None, cfg: Config | None = None):
    """Convenience wrapper: (result, Tf evaluator bound to f)."""
    res = top_extend(measure, cfg)
    f = measure.values if f is None else np.asarray(f, float)
    return res, (lambda pts: res(f, pts))
