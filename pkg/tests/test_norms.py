import math

import numpy as np
import pytest

from sumext.config import default_config
from sumext.jets import Jet
from sumext.measures import AtomicMeasure, Box, normalize
from sumext.norms import brudnyi_estimate, k_curve, k_curve_csv, lp_norm, overlap_audit, whitney_seminorm

UNIT = Box([0.0], [1.0])


def test_polynomials_cost_nothing():
    # fit residuals are roundoff, divided by side^m on the finest grids
    assert brudnyi_estimate(lambda X: 3 - 2 * X[:, 0], UNIT, 2, 2.0) <= 1e-7


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_square_benchmark(p):
    val = brudnyi_estimate(lambda X: X[:, 0] ** 2, UNIT, 2, p)
    assert 0.4 <= val <= 10.0
    if p == 2.0:
        assert val == pytest.approx(2.0, rel=1e-8)


def test_monotone_under_restriction():
    F = lambda X: np.sin(7 * X[:, 0]) * np.abs(X[:, 0] - 0.3) ** 1.5
    whole = brudnyi_estimate(F, UNIT, 1, 2.0)
    for sub in (Box([0.0], [0.5]), Box([0.25], [0.5]), Box([0.5], [0.75])):
        assert brudnyi_estimate(F, sub, 1, 2.0) <= whole + 1e-9


def test_whitney_constant_and_two_points():
    c = Jet.constant(1.0, 1, 1)
    assert whitney_seminorm([[0.0], [0.5], [1.0]], [c, c, c], 2.0) == 0.0
    d = 0.25
    val = whitney_seminorm([[0.0], [d]], [Jet.zero(1, 1), c], 2.0)
    assert val == pytest.approx(d**-0.5)


def test_whitney_scales_linearly():
    rng = np.random.default_rng(1)
    jets = [Jet(2, 1, rng.normal(size=2)) for _ in range(4)]
    pts = rng.random((4, 1))
    base = whitney_seminorm(pts, jets, 2.0)
    assert whitney_seminorm(pts, [j * 3.5 for j in jets], 2.0) == pytest.approx(3.5 * base, rel=1e-12)


def test_whitney_coincident_points():
    assert math.isinf(whitney_seminorm([[0.2], [0.2]], [Jet.zero(1, 1), Jet.constant(1.0, 1, 1)], 2.0))


def test_k_curve_properties():
    mu = normalize(np.array([[0.0], [0.3], [1.0]]), [1.0, 5.0, 0.5], [1.0, -1.0, 2.0], 1, 2.0)
    ts = np.geomspace(1e-3, 1e3, 20)
    rows = k_curve(mu.values, mu, ts, default_config(1, 1, 2.0))
    K = np.array([r[1] for r in rows])
    assert np.all(np.diff(K) >= -1e-12 * K.max())
    assert np.all(K <= ts * lp_norm(mu.values, mu, 2.0) * (1 + 1e-9))
    single = normalize(np.array([[0.4]]), [3.0], [2.0], 1, 2.0)
    assert all(r[1] == 0.0 for r in k_curve(single.values, single, ts))
    assert k_curve_csv(rows).splitlines()[0] == "t,K"


def test_overlap_counts():
    assert overlap_audit([Box([0.0], [1.0]), Box([2.0], [3.0])]) == 1
    nested = [Box([0.5 - r], [0.5 + r]) for r in (0.1, 0.2, 0.3)]
    assert overlap_audit(nested) == 3
    squares = [Box([0, 0], [1, 1]), Box([1, 1], [2, 2]), Box([0, 1], [1, 2]), Box([3, 3], [4, 4])]
    assert overlap_audit(squares) == 3
    assert overlap_audit([np.array([0.5]), np.array([0.6])]) == 1
