"""Acceptance criteria 1 to 11, one test each.  Every test logs a PASS/FAIL line, printed
at the end of the pytest run; `python tests/test_acceptance.py` prints the lines alone.

Norms below are computed on normalized measures.  Ratios do not depend on the frame.
"Scale" is max|f| (1 + sum of finite weights)^(1/p), the size of the data in J units;
values below 1e-6 of it are treated as zero, because an m = 2 fit of collinear data
has an oracle value of 1e-13 next to a rounding-level Tf.
"""

from __future__ import annotations

import json
import math
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from sumext.cli import OVERLAP_BOUND
from sumext.config import default_config
from sumext.dyadic import cz_decompose, geometry_audit
from sumext.extension import top_extend
from sumext.linmap import BlockProblem, guarantee_factor, select
from sumext.measures import AtomicMeasure, normalize, unit_box
from sumext.norms import brudnyi_estimate, k_curve, lp_norm
from sumext.oracle import j_norm
from sumext.suite import desk_suite, random_instance

HERE = Path(__file__).parent
BASELINE = json.loads((HERE / "baseline.json").read_text())
SEEDS = (0, 1)
ZERO = 1e-6

try:
    from conftest import CRITERIA
except ImportError:  # run as a script from elsewhere
    CRITERIA = []


def record(k, ok, detail):
    CRITERIA.append((k, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
    return ok


def data_scale(mu, p):
    fin = np.isfinite(mu.weights)
    return float(np.max(np.abs(mu.values))) * (1 + float(np.sum(mu.weights[fin]))) ** (1 / p)


class Row:
    """Everything the criteria need about one suite instance."""

    def __init__(self, inst):
        self.inst = inst
        mu = inst.measure
        self.cfg = default_config(inst.m, 1, 2.0)
        t0 = time.perf_counter()
        self.res = top_extend(mu, self.cfg)
        self.jv = self.res.j_value(mu.values)
        self.oracle = j_norm(mu.values, mu, self.cfg) ** 0.5
        self.seconds = time.perf_counter() - t0
        self.tf = self.jv["norm"]
        self.M = self.res.m_value(mu.values)
        self.scale = data_scale(mu, 2.0)
        self.degenerate = self.oracle <= ZERO * self.scale

    @property
    def ratio(self):
        return math.nan if self.degenerate else self.tf / self.oracle


@lru_cache(maxsize=None)
def suite(seed):
    return [Row(inst) for inst in desk_suite(seed)]


def _worst(rows, key):
    vals = [(key(r), r.inst.name) for r in rows if not math.isnan(key(r))]
    return max(vals) if vals else (math.nan, "")


# ---------------------------------------------------------------------------


def test_criterion_1_sandwich_floor():
    rows = suite(0)
    bad = [r.inst.name for r in rows if not r.tf >= r.oracle * (1 - 1e-6) - ZERO * r.scale]
    total = sum(r.seconds for r in rows)
    ok = record(1, not bad and total < 60, f"{len(rows)} instances, floor violations {bad or 'none'}, "
                f"build+norm time {total:.1f}s")
    assert ok


def test_criterion_2_bounded_distortion():
    parts, ok = [], True
    for seed in SEEDS:
        rows = suite(seed)
        worst, name = _worst(rows, lambda r: r.ratio)
        over = [r.inst.name for r in rows if r.ratio > 100]
        base = BASELINE["max_ratio"][str(seed)]
        stable = abs(worst - base) <= 0.2 * base
        ok &= not over and stable
        parts.append(f"seed {seed}: max ratio {worst:.3g} ({name}), {len(over)} above 100, "
                     f"baseline {base:.3g} {'kept' if stable else 'moved'}")
    by_m = {}
    for r in suite(0):
        if not r.degenerate:
            by_m.setdefault(r.inst.m, []).append(r.ratio)
    parts.append("seed 0 max by m: " + ", ".join(f"m={m} {max(v):.3g}" for m, v in sorted(by_m.items())))
    assert record(2, ok, "; ".join(parts))


def test_criterion_3_m_equivalence():
    rows = suite(0)
    off = []
    for r in rows:
        if r.tf <= ZERO * r.scale and r.M <= ZERO * r.scale:
            continue
        q = r.M / r.tf if r.tf > 0 else math.inf
        if not (1 / 100 <= q <= 100):
            off.append((r.inst.name, q))
    # base case: tiny weights make the whole frame OK for the full label
    mu = normalize(np.array([[0.1], [0.5], [0.9]]), [1e-6, 2e-6, 1e-6], [1.0, -2.0, 0.5], 1, 2.0)
    res = top_extend(mu, default_config(1, 1, 2.0))
    P0 = res.xi(mu.values)
    lhs, rhs = res.m_value(mu.values), lp_norm(mu.values - P0(mu.locations), mu, 2.0)
    exact = not res.trees and abs(lhs - rhs) <= 1e-12 * rhs
    qs = [r.M / r.tf for r in rows if r.tf > ZERO * r.scale]
    detail = (f"{len(off)} of {len(rows)} instances outside [1/100, 100] "
              f"(M/Tf range {min(qs):.3g} to {max(qs):.3g}); base case M {lhs:.6g} vs |f-P0| {rhs:.6g}")
    assert record(3, not off and exact, detail)


def test_criterion_4_linearity():
    rng = np.random.default_rng(4)
    grid = np.linspace(0, 1, 257).reshape(-1, 1)
    worst = 0.0
    worst_probe = 0.0
    for r in suite(0):
        res, N = r.res, len(r.inst.measure)
        for _ in range(10):
            f1, f2, lam = rng.normal(size=N), rng.normal(size=N), float(rng.normal())
            a, b = res(f1, grid), res(f2, grid)
            scale = 1 + np.abs(a).max() + abs(lam) * np.abs(b).max()
            worst = max(worst, float(np.abs(res(f1 + lam * f2, grid) - a - lam * b).max() / scale))
        f1, f2, lam = rng.normal(size=N), rng.normal(size=N), 0.7
        probes = [lambda f: res.xi(f).coeffs] + [lambda f, w=w: np.array([w(f)]) for w in res.functionals]
        for g in probes:
            x, y, z = g(f1), g(f2), g(f1 + lam * f2)
            worst_probe = max(worst_probe, float(np.abs(z - x - lam * y).max() / (1 + np.abs(x).max() + np.abs(y).max())))
    ok = worst <= 1e-8 and worst_probe <= 1e-8
    assert record(4, ok, f"grid defect {worst:.2e}, xi/Omega probe defect {worst_probe:.2e} (relative)")


def test_criterion_5_trace_mode():
    rng = np.random.default_rng(5)
    worst_res, worst_ratio = 0.0, 0.0
    for k in range(10):
        inst = random_instance(rng, 1 + k % 2, int(rng.integers(2, 9)), p_inf=1.0)
        mu = inst.measure
        cfg = default_config(inst.m, 1, 2.0)
        res = top_extend(mu, cfg)
        vals = res(mu.values, mu.locations)
        worst_res = max(worst_res, float(np.abs(vals - mu.values).max()))
        orc = j_norm(mu.values, mu, cfg) ** 0.5
        if orc > ZERO * np.abs(mu.values).max():
            worst_ratio = max(worst_ratio, res.tf_norm(mu.values) / orc)
    two = AtomicMeasure(np.array([[0.45], [0.55]]), [math.inf, math.inf], [0.0, 1.0])
    two_val = j_norm(two.values, two, default_config(1, 1, 2.0))
    ok = worst_res <= 1e-9 and worst_ratio <= 100 and abs(two_val - 10.0) <= 1e-8
    assert record(5, ok, f"max residual {worst_res:.2e}, max ratio {worst_ratio:.3g}, "
                  f"two-point squared norm {two_val:.12g} (expected 10)")


def test_criterion_6_oracle_closed_forms():
    mu = AtomicMeasure(np.array([[0.0], [1.0]]), [1.0, 1.0], [0.0, 3.0])
    v2 = j_norm(mu.values, mu, default_config(1, 1, 2.0))
    one = AtomicMeasure(np.array([[0.3]]), [4.0], [2.5])
    v1 = j_norm(one.values, one, default_config(2, 1, 2.0))
    ok = abs(v2 - 3.0) <= 1e-8 and v1 == 0.0
    assert record(6, ok, f"two-atom squared norm {v2:.12g} (b^2/3 = 3), one-atom {v1}")


def _brute_min(prob, v):
    k = prob.k
    axes = [np.linspace(-6, 6, 41)] * k
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, k)
    r = mesh @ prob.Aw.T + (prob.Bv @ v)[None, :]
    vals = np.sum(prob.c * np.abs(r) ** prob.p, axis=1)
    start = mesh[int(np.argmin(vals))]
    out = minimize(lambda w: prob.objective(v, w), start, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 40000})
    return min(out.fun, float(vals.min()))


def test_criterion_7_linear_map_lemma():
    rng = np.random.default_rng(7)
    worst = 0.0
    for t in range(50):
        p = 2.0 if t % 2 == 0 else 4.0
        k = int(rng.integers(1, 4))
        r, q = k + int(rng.integers(0, 4)), int(rng.integers(1, 4))
        prob = BlockProblem(rng.normal(size=(r, k)), rng.normal(size=(r, q)), 10 ** rng.uniform(-1, 1, r), p)
        v = rng.normal(size=q)
        got = prob.objective(v, select(prob, v, "sequential"))
        best = _brute_min(prob, v)
        worst = max(worst, got / (guarantee_factor(p, k) * best) if best > 1e-14 else (0.0 if got <= 1e-12 else math.inf))
    # separable p = 2 blocks: each residual row touches one coordinate
    sep_err = 0.0
    for _ in range(10):
        k = int(rng.integers(1, 4))
        rows = np.repeat(np.arange(k), 3)
        Aw = np.zeros((rows.size, k))
        Aw[np.arange(rows.size), rows] = rng.normal(size=rows.size)
        prob = BlockProblem(Aw, rng.normal(size=(rows.size, 2)), 10 ** rng.uniform(-1, 1, rows.size), 2.0)
        v = rng.normal(size=2)
        exact = np.linalg.lstsq(np.sqrt(prob.c)[:, None] * Aw, -np.sqrt(prob.c) * (prob.Bv @ v), rcond=None)[0]
        sep_err = max(sep_err, abs(prob.objective(v, select(prob, v, "sequential")) - prob.objective(v, exact)))
    ok = worst <= 1.0 and sep_err <= 1e-8
    assert record(7, ok, f"max objective / ((1+2^p)^k brute minimum) {worst:.3g}; separable gap {sep_err:.1e}")


def test_criterion_8_geometry():
    violations, trees = [], 0
    for r in suite(0):
        for path, tree in r.res.trees:
            trees += 1
            a = geometry_audit(tree)
            if a["violations"]:
                violations.append((r.inst.name, path, a["violations"][:2]))
    cfg = default_config(1, 1, 2.0)
    depth_off = []
    for mass in (3.0, 50.0, 800.0):
        mu = AtomicMeasure(np.array([[0.41]]), [mass], [0.0])
        tree = cz_decompose(mu, frozenset(), cfg)
        a = geometry_audit(tree, measure=mu, cfg=cfg)
        depth = -math.log2(min(tree.side(i) for i in range(len(tree))))
        pred = math.log2(30 * mass / cfg.eps**2)
        if abs(depth - pred) > 1 + 1e-9 or a["violations"]:
            depth_off.append((mass, depth, pred))
    ok = not violations and not depth_off
    assert record(8, ok, f"{trees} trees audited, {len(violations)} with violations; heavy-atom depth off "
                  f"by more than one level: {depth_off or 'none'}")


def test_criterion_9_constructibility():
    rng = np.random.default_rng(9)
    worst, used, overlap = 0.0, 0, 0
    from sumext.norms import overlap_audit

    for r in suite(0):
        mu, m = r.inst.measure, r.inst.m
        for y in rng.random(50):
            direct = r.res.derivs(mu.values, [[y]], m - 1)[:, 0]
            rec, u = r.res.reconstruct_jet(mu.values, [y])
            worst = max(worst, float(np.abs(rec - direct).max() / (1 + np.abs(direct).max())))
            used = max(used, u)
        overlap = max(overlap, overlap_audit(r.res.omega_supports()))
    ok = worst <= 1e-8 and overlap <= OVERLAP_BOUND[1]
    assert record(9, ok, f"reconstruction error {worst:.1e} using at most {used} functionals; "
                  f"Omega overlap {overlap} (recorded bound {OVERLAP_BOUND[1]})")


def test_criterion_10_norm_cross_checks():
    worst = (0.0, "")
    for r in suite(0):
        mu = r.inst.measure
        semi = r.res.seminorm_p(mu.values) ** 0.5
        if semi <= ZERO * r.scale:
            continue
        boxes = [b for _, t in r.res.trees for b in t.boxes]
        est = brudnyi_estimate(lambda X: r.res(mu.values, X), unit_box(1), r.inst.m, 2.0, focus=boxes)
        f = max(est / semi, semi / est) if est > 0 else math.inf
        worst = max(worst, (f, r.inst.name))
    sq = brudnyi_estimate(lambda X: X[:, 0] ** 2, unit_box(1), 2, 2.0)
    ok = worst[0] <= 10 and 0.4 <= sq <= 10
    assert record(10, ok, f"worst Brudnyi/seminorm factor {worst[0]:.3g} ({worst[1]}); x^2 benchmark {sq:.6g}")


def test_criterion_11_k_curve():
    ts = np.geomspace(1e-3, 1e3, 20)
    bad = []
    for r in suite(0):
        mu = r.inst.measure
        K = np.array([row[1] for row in k_curve(mu.values, mu, ts, r.cfg)])
        bound = ts * lp_norm(mu.values, mu, 2.0)
        # m = 2 with two atoms has K identically zero; the solver returns roundoff there
        tol = 1e-9 * max(K.max(), r.scale)
        if np.any(np.diff(K) < -tol) or np.any(K > bound * (1 + 1e-9) + tol):
            bad.append(r.inst.name)
    single = normalize(np.array([[0.2]]), [5.0], [3.0], 2, 2.0)
    zero = all(row[1] == 0.0 for row in k_curve(single.values, single, ts))
    assert record(11, not bad and zero, f"violations {bad or 'none'}; single atom all zero: {zero}")


if __name__ == "__main__":
    fails = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                fails += 1
    sys.exit(1 if fails else 0)
