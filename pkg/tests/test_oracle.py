import math

import numpy as np
import pytest

from sumext.config import default_config
from sumext.jets import Jet, make_label
from sumext.measures import AtomicMeasure, Box
from sumext.oracle import (InfeasibleError, SolveSpec, gauge, has_basis, j_norm, j_norm_with_jet, ok_test,
                           quadratic_solution, smallok_threshold)

INF = math.inf


def mu1(xs, ws, fs):
    return AtomicMeasure(np.reshape(xs, (-1, 1)), ws, fs)


def test_single_atom_is_free():
    mu = mu1([0.3], [5.0], [7.0])
    assert j_norm(mu.values, mu, default_config(2, 1, 2.0)) == 0.0


def test_two_atoms_closed_form():
    # min over the slope s of s^2 + (b - s)^2 / 2 at b = 3 gives b^2 / 3
    mu = mu1([0.0, 1.0], [1.0, 1.0], [0.0, 3.0])
    assert j_norm(mu.values, mu, default_config(1, 1, 2.0)) == pytest.approx(3.0, abs=1e-8)


def test_two_atoms_irls_path_agrees():
    mu = mu1([0.0, 1.0], [1.0, 1.0], [0.0, 3.0])
    val = j_norm(mu.values, mu, default_config(1, 1, 2.0, oracle="irls"))
    assert val == pytest.approx(3.0, rel=0.02)


def test_interpolation_closed_form():
    mu = mu1([0.0, 1.0], [INF, INF], [0.0, 1.0])
    assert j_norm(mu.values, mu, default_config(1, 1, 2.0)) == pytest.approx(1.0, abs=1e-10)
    mu = mu1([0.45, 0.55], [INF, INF], [0.0, 1.0])
    assert j_norm(mu.values, mu, default_config(1, 1, 2.0)) == pytest.approx(10.0, abs=1e-8)


def test_m2_interpolation_of_a_line_is_free():
    mu = mu1([0.1, 0.4, 0.9], [INF, INF, INF], [0.2, 0.8, 1.8])
    assert j_norm(mu.values, mu, default_config(2, 1, 2.0)) == pytest.approx(0.0, abs=1e-10)


def test_conflicting_exact_values():
    mu = mu1([0.5, 0.5], [INF, INF], [0.0, 1.0])
    with pytest.raises(InfeasibleError):
        j_norm(mu.values, mu, default_config(1, 1, 2.0))


def test_jet_anchor_without_atoms():
    empty = AtomicMeasure(np.zeros((0, 1)), [], [])
    dom = Box([0.0], [1.0])
    cfg = default_config(1, 1, 2.0)
    assert j_norm_with_jet([], Jet.zero(1, 1), empty, 1.0, dom, cfg) == pytest.approx(0.0, abs=1e-14)
    assert j_norm_with_jet([], Jet.constant(1.0, 1, 1), empty, 1.0, dom, cfg) == pytest.approx(0.0, abs=1e-12)


def test_jet_anchor_against_ode_solution():
    # min int F'^2 + (F - 1)^2 on (0, 1) with F(1/2) = 0: each half contributes tanh(1/2).
    # The anchor term is integrated on a refined spline space, so the match is not exact.
    mu = mu1([0.5], [INF], [0.0])
    val = j_norm_with_jet([0.0], Jet.constant(1.0, 1, 1), mu, 1.0, Box([0.0], [1.0]), default_config(1, 1, 2.0))
    assert val >= 2 * math.tanh(0.5) - 1e-12
    assert val == pytest.approx(2 * math.tanh(0.5), rel=1e-3)


@pytest.mark.parametrize("width", [3.9e-4, 2e-3, 8.6e-3])
def test_anchored_solve_keeps_lines_on_narrow_domains(width):
    # a line anchored to itself costs nothing, however thin the domain is next to the
    # anchor scale; the normal equations lost this at width 4e-4
    cfg = default_config(2, 1, 2.0).with_(grid2=8)
    dom = Box([0.4296875], [0.4296875 + width])
    xs, ds = 0.46484375, 0.0078125
    spec = SolveSpec(2, 1, 2.0, np.zeros((0, 1)), np.zeros(0), domain=dom, anchor_delta=ds,
                     anchor_center=(xs,), anchor_scale=ds)
    qs = quadratic_solution(spec, cfg)
    a, b = 4.367, -6.58
    theta = np.array([a + b * xs, b * ds])
    assert qs.value(theta) <= 1e-12
    g = np.linspace(dom.lo[0], dom.hi[0], 7).reshape(-1, 1)
    assert np.allclose(qs.function(theta)(g), a + b * g[:, 0], atol=1e-10)


def test_gauge_of_constant_at_weighted_atom():
    W = 7.0
    mu = mu1([0.0], [W], [0.0])
    assert gauge(Jet.constant(1.0, 1, 1), [0.0], mu, cfg=default_config(1, 1, 2.0)) == pytest.approx(W**0.5, rel=1e-6)
    empty = AtomicMeasure(np.zeros((0, 1)), [], [])
    assert gauge(Jet.constant(1.0, 1, 1), [0.0], empty) == 0.0


@pytest.mark.parametrize("W", [0.5, 2.0])
def test_has_basis_threshold(W):
    cfg = default_config(1, 1, 2.0, eps=1.0)
    mu = mu1([0.0], [W], [0.0])
    delta = 1.0  # eps^2 delta^{2(1/2 - 1)} = 1
    res = has_basis(make_label([(0,)]), [0.0], cfg.eps, delta, mu, None, cfg)
    assert res.ok == (W <= 1.0)


def test_ok_test_smallok_and_heavy():
    cfg = default_config(1, 1, 2.0)
    cube = Box([0.0], [0.125])
    empty = mu1([0.9], [1.0], [0.0])
    ok, wit = ok_test(cube, frozenset(), empty, cfg)
    assert ok and wit == make_label([(0,)])
    # exactly at the threshold still passes
    thr = smallok_threshold(0.125, cfg)
    edge = mu1([0.06], [thr], [0.0])
    assert ok_test(cube, frozenset(), edge, cfg)[0]
    heavy = mu1([0.06], [1e6], [0.0])
    assert not ok_test(cube, frozenset(), heavy, cfg)[0]
