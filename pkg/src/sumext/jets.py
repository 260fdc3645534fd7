"""Multi-indices, labels and (m-1)-jets.

A jet is a polynomial of degree <= m-1 in n variables.  Coefficients are
kept in the monomial basis about a center (the origin unless a jet has been
re-expanded with ``recenter``).  Coefficient vectors follow the order of
``multi_indices(m, n)``, which is the strict order on multi-indices used for
labels: compare prefix sums at the last position where they differ.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

MAX_M = 4
MAX_N = 2


class DegenerateBasisError(ValueError):
    """Raised when candidate jets cannot be rectified into a dual basis."""


def _check_caps(m: int, n: int) -> None:
    if not (1 <= m <= MAX_M):
        raise ValueError(f"m must be in 1..{MAX_M}, got {m}")
    if not (1 <= n <= MAX_N):
        raise ValueError(f"n must be in 1..{MAX_N}, got {n}")


def multiindex_less(a, b) -> bool:
    """True iff a < b in the prefix-sum order.  Equal inputs give False."""
    a = tuple(a)
    b = tuple(b)
    if len(a) != len(b):
        raise ValueError("multi-indices of different dimension")
    sa = np.cumsum(a)
    sb = np.cumsum(b)
    for k in range(len(a) - 1, -1, -1):
        if sa[k] != sb[k]:
            return bool(sa[k] < sb[k])
    return False


def _mi_cmp(a, b) -> int:
    if a == b:
        return 0
    return -1 if multiindex_less(a, b) else 1


@functools.lru_cache(maxsize=None)
def all_multi_indices(order: int, n: int) -> tuple:
    """All multi-indices with |alpha| <= order, sorted by ``multiindex_less``."""
    out = [a for a in itertools.product(range(order + 1), repeat=n) if sum(a) <= order]
    return tuple(sorted(out, key=functools.cmp_to_key(_mi_cmp)))


@functools.lru_cache(maxsize=None)
def multi_indices(m: int, n: int) -> tuple:
    """The index set M of (m-1)-jets, in the label order."""
    _check_caps(m, n)
    return all_multi_indices(m - 1, n)


def jet_dim(m: int, n: int) -> int:
    return len(multi_indices(m, n))


@functools.lru_cache(maxsize=None)
def top_order_indices(m: int, n: int) -> tuple:
    """Multi-indices of order exactly m (the ones entering the seminorm)."""
    return tuple(a for a in all_multi_indices(m, n) if sum(a) == m)


def _factorial(alpha) -> int:
    return math.prod(math.factorial(k) for k in alpha)


# ---------------------------------------------------------------------------
# labels


Label = frozenset


def make_label(members) -> frozenset:
    return frozenset(tuple(int(v) for v in a) for a in members)


def label_less(A, B) -> bool:
    """A < B iff the order-minimal element of the symmetric difference lies in A."""
    A = frozenset(A)
    B = frozenset(B)
    diff = A ^ B
    if not diff:
        return False
    low = min(diff, key=functools.cmp_to_key(_mi_cmp))
    return low in A


def _label_cmp(A, B) -> int:
    if A == B:
        return 0
    return -1 if label_less(A, B) else 1


def is_monotonic(A, m: int) -> bool:
    n = len(next(iter(A))) if A else 1
    for a in A:
        for g in all_multi_indices(m - 1 - sum(a), n):
            if tuple(x + y for x, y in zip(a, g)) not in A:
                return False
    return True


def full_label(m: int, n: int) -> frozenset:
    return frozenset(multi_indices(m, n))


@functools.lru_cache(maxsize=None)
def monotonic_labels(m: int, n: int) -> tuple:
    """Every monotonic label for (m, n), sorted increasingly (M first, empty last)."""
    M = multi_indices(m, n)
    labels = []
    for bits in itertools.product((0, 1), repeat=len(M)):
        A = frozenset(a for a, b in zip(M, bits) if b)
        if not A or is_monotonic(A, m):
            labels.append(A)
    return tuple(sorted(labels, key=functools.cmp_to_key(_label_cmp)))


def labels_below(A, m: int, n: int) -> tuple:
    """Monotonic labels strictly below A, easiest first."""
    return tuple(L for L in monotonic_labels(m, n) if label_less(L, A))


def label_to_json(A) -> list:
    return [list(a) for a in sorted(A, key=functools.cmp_to_key(_mi_cmp))]


def label_from_json(data) -> frozenset:
    return make_label(data)


# ---------------------------------------------------------------------------
# linear maps on coefficient vectors


def monomial_derivs(points, m: int, n: int, alphas=None, center=None) -> np.ndarray:
    """Derivatives of the monomials (x - center)^beta at ``points``.

    Returns an array of shape (len(alphas), npts, D): entry [i, k, j] is
    d^{alphas[i]} (x - c)^{beta_j} evaluated at points[k].
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != n and pts.shape[0] == n and n > 1:
        pts = pts.T
    if n == 1:
        pts = pts.reshape(-1, 1)
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float).reshape(n)
    rel = pts - c
    basis = multi_indices(m, n)
    if alphas is None:
        alphas = basis
    out = np.zeros((len(alphas), rel.shape[0], len(basis)))
    for i, a in enumerate(alphas):
        for j, b in enumerate(basis):
            if any(ak > bk for ak, bk in zip(a, b)):
                continue
            coef = 1.0
            col = np.ones(rel.shape[0])
            for d in range(n):
                k = b[d] - a[d]
                coef *= math.factorial(b[d]) / math.factorial(k)
                if k:
                    col = col * rel[:, d] ** k
            out[i, :, j] = coef * col
    return out


def derivative_matrix(x, m: int, n: int, center=None) -> np.ndarray:
    """D x D matrix taking coefficients to the derivative vector (d^a P(x))_a."""
    return monomial_derivs(np.reshape(np.asarray(x, float), (1, n)), m, n, center=center)[:, 0, :]


def recenter_matrix(c_from, c_to, m: int, n: int) -> np.ndarray:
    """Coefficients about c_from -> coefficients about c_to (binomial re-expansion)."""
    Dm = derivative_matrix(c_to, m, n, center=c_from)
    fact = np.array([1.0 / _factorial(a) for a in multi_indices(m, n)])
    return fact[:, None] * Dm


def scaled_taylor_matrix(x, h: float, m: int, n: int) -> np.ndarray:
    """Origin coefficients -> coefficients in the variable s with x = c + h s."""
    scale = np.array([h ** sum(a) for a in multi_indices(m, n)])
    return scale[:, None] * recenter_matrix(np.zeros(n), x, m, n)


def norm_weights(delta: float, m: int, n: int, p: float) -> np.ndarray:
    """Weights delta^{n + (|a| - m) p} of the |P|_{x,delta} norm, per multi-index."""
    return np.array([delta ** (n + (sum(a) - m) * p) for a in multi_indices(m, n)])


# ---------------------------------------------------------------------------
# Jet type


@dataclass(frozen=True)
class Jet:
    m: int
    n: int
    coeffs: np.ndarray = field(repr=False)
    center: tuple = None

    def __post_init__(self):
        _check_caps(self.m, self.n)
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != jet_dim(self.m, self.n):
            raise ValueError("coefficient vector has the wrong length")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        ctr = (0.0,) * self.n if self.center is None else tuple(float(v) for v in self.center)
        object.__setattr__(self, "center", ctr)

    # construction helpers
    @classmethod
    def zero(cls, m, n):
        return cls(m, n, np.zeros(jet_dim(m, n)))

    @classmethod
    def constant(cls, value, m, n):
        c = np.zeros(jet_dim(m, n))
        c[0] = value
        return cls(m, n, c)

    @classmethod
    def monomial(cls, alpha, m, n, coef=1.0):
        c = np.zeros(jet_dim(m, n))
        c[multi_indices(m, n).index(tuple(alpha))] = coef
        return cls(m, n, c)

    @classmethod
    def from_derivatives(cls, derivs, x, m, n):
        """The jet whose derivatives at x are ``derivs`` (ordered like multi_indices)."""
        fact = np.array([1.0 / _factorial(a) for a in multi_indices(m, n)])
        local = cls(m, n, fact * np.asarray(derivs, float), center=tuple(np.reshape(x, n)))
        return local.recenter(np.zeros(n))

    # algebra
    def _aligned(self, other: "Jet") -> np.ndarray:
        if (other.m, other.n) != (self.m, self.n):
            raise ValueError("jets of different shape")
        if other.center == self.center:
            return other.coeffs
        return other.recenter(self.center).coeffs

    def __add__(self, other):
        return Jet(self.m, self.n, self.coeffs + self._aligned(other), self.center)

    def __sub__(self, other):
        return Jet(self.m, self.n, self.coeffs - self._aligned(other), self.center)

    def __mul__(self, s):
        return Jet(self.m, self.n, self.coeffs * float(s), self.center)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def recenter(self, new_center) -> "Jet":
        new_center = tuple(float(v) for v in np.reshape(new_center, self.n))
        if new_center == self.center:
            return self
        R = recenter_matrix(self.center, new_center, self.m, self.n)
        return Jet(self.m, self.n, R @ self.coeffs, new_center)

    def derivatives(self, x) -> np.ndarray:
        return derivative_matrix(x, self.m, self.n, center=self.center) @ self.coeffs

    def derivative(self, alpha, x) -> float:
        i = multi_indices(self.m, self.n).index(tuple(alpha))
        return float(self.derivatives(x)[i])

    def __call__(self, points) -> np.ndarray:
        pts = np.reshape(np.asarray(points, float), (-1, self.n))
        zero = ((0,) * self.n,)
        vals = monomial_derivs(pts, self.m, self.n, alphas=zero, center=self.center)[0]
        return vals @ self.coeffs

    def allclose(self, other: "Jet", atol=1e-12) -> bool:
        return bool(np.allclose(self.coeffs, self._aligned(other), atol=atol, rtol=0))

    def to_json(self) -> dict:
        base = self.recenter(np.zeros(self.n))
        return {
            "m": self.m,
            "n": self.n,
            "coeffs": [{"alpha": list(a), "c": float(c)} for a, c in zip(multi_indices(self.m, self.n), base.coeffs)],
        }

    @classmethod
    def from_json(cls, data) -> "Jet":
        m, n = int(data["m"]), int(data["n"])
        idx = {a: i for i, a in enumerate(multi_indices(m, n))}
        c = np.zeros(len(idx))
        for entry in data["coeffs"]:
            a = tuple(int(v) for v in entry["alpha"])
            if a not in idx:
                raise ValueError(f"multi-index {a} is not in M for m={m}, n={n}")
            c[idx[a]] = float(entry["c"])
        return cls(m, n, c)


# ---------------------------------------------------------------------------
# operations


def jet_norm(P: Jet, x, delta: float, p: float) -> float:
    """(sum_a |d^a P(x)|^p delta^{n+(|a|-m)p})^{1/p}."""
    if not delta > 0:
        raise ValueError("jet_norm needs delta > 0")
    d = np.abs(P.derivatives(x))
    w = norm_weights(delta, P.m, P.n, p)
    return float(np.sum(w * d**p) ** (1.0 / p))


def transport(P: Jet, x, x_new) -> Jet:
    """Re-expand P (viewed as a jet at x) about x_new.  Values are unchanged."""
    return P.recenter(x).recenter(x_new)


def jet_product(P: Jet, Q: Jet, x) -> Jet:
    """Taylor polynomial at x, of degree <= m-1, of the product P*Q."""
    m, n = P.m, P.n
    dP = P.derivatives(x)
    dQ = Q.derivatives(x)
    M = multi_indices(m, n)
    pos = {a: i for i, a in enumerate(M)}
    out = np.zeros(len(M))
    for i, a in enumerate(M):
        total = 0.0
        for b in M:
            if all(bk <= ak for bk, ak in zip(b, a)):
                c = tuple(ak - bk for ak, bk in zip(a, b))
                binom = math.prod(math.comb(ak, bk) for ak, bk in zip(a, b))
                total += binom * dP[pos[b]] * dQ[pos[c]]
        out[i] = total
    return Jet.from_derivatives(out, x, m, n)


def rectify_basis(candidates: dict, x, eps2: float = None, cond_limit: float = 1e12):
    """Turn near-dual candidates {alpha: P^alpha} into an exactly dual family.

    Returns (B, rectified) with rectified[alpha] = sum_beta B[alpha, beta] P^beta and
    d^gamma rectified[alpha](x) = delta_{alpha gamma} for alpha, gamma in the label.
    """
    alphas = sorted(candidates, key=functools.cmp_to_key(_mi_cmp))
    if not alphas:
        return np.zeros((0, 0)), {}
    P0 = candidates[alphas[0]]
    M = multi_indices(P0.m, P0.n)
    cols = [M.index(a) for a in alphas]
    G = np.array([candidates[a].derivatives(x)[cols] for a in alphas])
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > cond_limit:
        raise DegenerateBasisError("candidate jets do not form a basis at x")
    B = np.linalg.inv(G)
    rect = {}
    for i, a in enumerate(alphas):
        acc = Jet.zero(P0.m, P0.n)
        for j, b in enumerate(alphas):
            acc = acc + candidates[b] * B[i, j]
        rect[a] = acc.recenter(np.zeros(P0.n))
    return B, rect
