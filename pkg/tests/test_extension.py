import math

import numpy as np
import pytest

from sumext.config import default_config
from sumext.extension import extend, top_extend
from sumext.measures import normalize
from sumext.norms import lp_norm, overlap_audit
from sumext.oracle import j_norm
from sumext.suite import desk_suite

INF = math.inf
GRID = np.linspace(0.0, 1.0, 301).reshape(-1, 1)


@pytest.fixture(scope="module")
def mixed():
    mu = normalize(np.array([[0.0], [0.2], [0.5], [0.55], [1.0]]), [1.0, INF, 30.0, 0.5, INF],
                   [0.3, -1.0, 2.0, 0.0, 1.0], 2, 2.0)
    return mu, top_extend(mu, default_config(2, 1, 2.0))


def test_zero_data(mixed):
    mu, res = mixed
    z = np.zeros(len(mu))
    assert np.all(res(z, GRID) == 0.0)
    assert res.m_value(z) == 0.0


def test_linearity(mixed):
    mu, res = mixed
    rng = np.random.default_rng(0)
    for _ in range(5):
        f1, f2, lam = rng.normal(size=len(mu)), rng.normal(size=len(mu)), rng.normal()
        lhs = res(f1 + lam * f2, GRID)
        rhs = res(f1, GRID) + lam * res(f2, GRID)
        scale = 1 + np.abs(res(f1, GRID)).max() + abs(lam) * np.abs(res(f2, GRID)).max()
        assert np.abs(lhs - rhs).max() <= 1e-8 * scale


def test_interpolates_infinite_atoms(mixed):
    mu, res = mixed
    vals = res(mu.values, mu.locations)
    inf = mu.infinite
    assert np.abs(vals[inf] - mu.values[inf]).max() <= 1e-9


def test_floor_against_oracle(mixed):
    mu, res = mixed
    cfg = default_config(2, 1, 2.0)
    assert res.j_value(mu.values)["total_p"] >= j_norm(mu.values, mu, cfg) * (1 - 1e-6)


def test_single_atom():
    mu = normalize(np.array([[0.3]]), [2.0], [5.0], 1, 2.0)
    res = top_extend(mu, default_config(1, 1, 2.0))
    assert res.m_value(mu.values) <= 1e-9 * 5
    assert res.tf_norm(mu.values) <= 1e-9 * 5
    assert np.allclose(res(mu.values, GRID), 5.0)


def test_two_atom_example():
    mu = normalize(np.array([[0.0], [1.0]]), [1.0, 1.0], [0.0, 3.0], 1, 2.0)
    res, F = extend(mu, cfg=default_config(1, 1, 2.0))
    tf_p = res.j_value(mu.values)["total_p"] / mu.frame.weight_factor
    assert tf_p >= 3.0 * (1 - 1e-6)
    assert tf_p <= 3.0 * 100**2  # recorded in the ledger; about 15.7^2 at the default eps


def test_base_case_m_value():
    # negligible weights: the top cube is OK for the full label, so T f = P0
    mu = normalize(np.array([[0.1], [0.5], [0.9]]), [1e-6, 2e-6, 1e-6], [1.0, -2.0, 0.5], 1, 2.0)
    res = top_extend(mu, default_config(1, 1, 2.0))
    assert not res.trees
    P0 = res.xi(mu.values)
    assert res.m_value(mu.values) == pytest.approx(lp_norm(mu.values - P0(mu.locations), mu, 2.0), rel=1e-12)


def test_trace_mode_terms_and_ledger():
    mu = normalize(np.array([[0.45], [0.55], [0.8]]), [INF, INF, INF], [0.0, 1.0, 0.2], 1, 2.0)
    res = top_extend(mu, default_config(1, 1, 2.0))
    terms = res.m_terms(mu.values)
    if "zeta" in terms:
        assert np.abs(terms["zeta"]).max() <= 1e-10
    pts = [r for r in res.functionals if r.kind == "point"]
    assert pts
    assert overlap_audit([r.support for r in pts]) == 1
    for r in pts:
        assert np.allclose(r.support.lo, r.support.hi)


def test_reconstruction_from_ledger():
    inst = desk_suite(0)[3]
    mu = inst.measure
    res = top_extend(mu, default_config(inst.m, 1, 2.0))
    rng = np.random.default_rng(2)
    for y in rng.random(10):
        direct = res.derivs(mu.values, [[y]], inst.m - 1)[:, 0]
        rec, used = res.reconstruct_jet(mu.values, [y])
        assert np.abs(rec - direct).max() <= 1e-8 * (1 + np.abs(direct).max())
        assert used >= 1


def test_xi_is_linear(mixed):
    mu, res = mixed
    rng = np.random.default_rng(5)
    f1, f2 = rng.normal(size=len(mu)), rng.normal(size=len(mu))
    a = res.xi(f1 + 2 * f2).coeffs
    b = res.xi(f1).coeffs + 2 * res.xi(f2).coeffs
    assert np.allclose(a, b, atol=1e-10 * (1 + np.abs(a).max()))


@pytest.mark.parametrize("seed,k", [(3, 1), (2, 27), (3, 25)])
def test_lines_are_reproduced(seed, k):
    # m = 2 data sampled from a line has zero cost and must come back as that line; the cost
    # floor is roundoff in second derivatives on cubes of side ~1e-4
    inst = desk_suite(seed)[k]
    mu = inst.measure
    res = top_extend(mu, default_config(2, 1, 2.0))
    f = 0.7 - 3.1 * mu.locations[:, 0]
    assert res.m_value(f) <= 1e-3 and res.tf_norm(f) <= 1e-3
    assert np.abs(res(f, GRID) - (0.7 - 3.1 * GRID[:, 0])).max() <= 1e-7
