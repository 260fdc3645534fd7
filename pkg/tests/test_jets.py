import math

import numpy as np
import pytest

from sumext.jets import (
    DegenerateBasisError, Jet, full_label, jet_norm, jet_product, label_less, make_label,
    monotonic_labels, multiindex_less, rectify_basis, transport,
)


def test_multiindex_order_by_prefix_sums():
    assert multiindex_less((0, 1), (1, 0))
    assert not multiindex_less((1, 0), (0, 1))
    assert multiindex_less((1, 0), (0, 2))  # lower total degree comes first
    assert not multiindex_less((1, 1), (1, 1))


def test_label_order_extremes():
    m, n = 2, 1
    assert label_less(make_label([(0,)]), frozenset())
    M = full_label(m, n)
    for B in monotonic_labels(m, n):
        if B != M:
            assert label_less(M, B)
    assert not label_less(M, M)


@pytest.mark.parametrize("delta,expected", [(1.0, 1.0), (2.0, 2 ** -0.5)])
def test_norm_of_constant(delta, expected):
    assert jet_norm(Jet.constant(1.0, 1, 1), [0.3], delta, 2.0) == pytest.approx(expected, rel=1e-14)


def test_norm_of_linear_jet():
    assert jet_norm(Jet.monomial((1,), 2, 1), [0.0], 1.0, 2.0) == pytest.approx(1.0)


def test_norm_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        jet_norm(Jet.constant(1.0, 1, 1), [0.0], 0.0, 2.0)


def test_transport_keeps_the_polynomial():
    P = Jet.monomial((1,), 2, 1)
    Q = transport(P, [0.0], [1.0])
    assert np.allclose(Q.coeffs, [1.0, 1.0])  # t = 1 + (t - 1)
    pts = np.linspace(-2, 2, 7)
    assert np.allclose(Q(pts), P(pts))


def test_jet_product_truncates():
    one = Jet.constant(1.0, 2, 1)
    t = Jet.monomial((1,), 2, 1)
    assert jet_product(one, one, [0.0]).allclose(one)
    assert jet_product(t, t, [0.0]).allclose(Jet.zero(2, 1))
    # degree-1 Taylor of t^2 at 1 is 2t - 1
    assert jet_product(t, t, [1.0]).allclose(Jet(2, 1, [-1.0, 2.0]))


def test_jet_product_2d_against_numeric():
    rng = np.random.default_rng(3)
    P, Q = Jet(3, 2, rng.normal(size=6)), Jet(3, 2, rng.normal(size=6))
    x = np.array([0.2, -0.4])
    R = jet_product(P, Q, x)
    # the product and R agree to second order at x
    for h in (1e-2, 5e-3):
        y = x + h * np.array([0.6, 0.8])
        err = abs(P(y)[0] * Q(y)[0] - R(y)[0])
        assert err < 50 * h**3


def test_rectify_dual_and_scaled():
    m, n = 2, 1
    x = np.zeros(1)
    cands = {(0,): Jet.constant(1.0, m, n), (1,): Jet.monomial((1,), m, n)}
    B, rect = rectify_basis(cands, x)
    assert np.allclose(B, np.eye(2))
    eps = 0.05
    B, rect = rectify_basis({(0,): Jet.constant(1 + eps, m, n)}, x)
    assert B[0, 0] == pytest.approx(1 / (1 + eps))
    assert rect[(0,)](x)[0] == pytest.approx(1.0)


def test_rectify_reports_degeneracy():
    with pytest.raises(DegenerateBasisError):
        rectify_basis({(0,): Jet.zero(1, 1)}, np.zeros(1))


def test_json_round_trip():
    P = Jet(2, 2, [1.0, -2.0, 0.5], center=(0.3, 0.1))
    Q = Jet.from_json(P.to_json())
    assert Q.allclose(P)
    assert math.isclose(Q([0.7, 0.2])[0], P([0.7, 0.2])[0])
