"""Linear near-minimizers for p-th power residual objectives over a finite block of unknowns.

The objective is  M(v, w) = sum_l c_l |a_l . w + b_l . v|^p.  ``select`` returns a matrix Xi
with w = Xi v, so the selection is linear in v by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass
class BlockProblem:
    Aw: np.ndarray  # (r, k)
    Bv: np.ndarray  # (r, q)
    c: np.ndarray  # (r,)
    p: float = 2.0
    Psi_w: np.ndarray | None = None  # (e, k)
    Psi_v: np.ndarray | None = None  # (e, q)

    def __post_init__(self):
        self.Aw = np.atleast_2d(np.asarray(self.Aw, float))
        self.Bv = np.atleast_2d(np.asarray(self.Bv, float))
        self.c = np.reshape(np.asarray(self.c, float), -1)
        if not (self.Aw.shape[0] == self.Bv.shape[0] == self.c.shape[0]):
            raise ValueError("residual blocks have inconsistent row counts")

    @property
    def k(self) -> int:
        return self.Aw.shape[1]

    def objective(self, v, w) -> float:
        r = self.Aw @ np.asarray(w, float) + self.Bv @ np.asarray(v, float)
        return float(np.sum(self.c * np.abs(r) ** self.p))


def sequential_map(Aw, Bv, c, p) -> np.ndarray:
    """One-coordinate formula applied in index order, each step substituted into the rest.

    For coordinate i the remaining unknowns and v play the role of the data, and
        w_i = - sum c|a|^p (rest / a) / sum c|a|^p    over rows with a != 0,
    or w_i = 0 when every a vanishes.
    """
    r, k = Aw.shape
    q = Bv.shape[1]
    cur = np.hstack([Aw, Bv])
    steps = []
    for _ in range(k):
        a, rest = cur[:, 0], cur[:, 1:]
        nz = a != 0
        wts = np.where(nz, c * np.abs(a) ** p, 0.0)
        tot = wts.sum()
        if tot > 0:
            g = -(wts[nz, None] * (rest[nz] / a[nz, None])).sum(axis=0) / tot
        else:
            g = np.zeros(rest.shape[1])
        steps.append(g)
        cur = rest + a[:, None] * g[None, :]
    # back substitution: w_i = g_i[:k-i-1] . w_{i+1:} + g_i[k-i-1:] . v
    Xi = np.zeros((k, q))
    for i in range(k - 1, -1, -1):
        g = steps[i]
        nxt = k - i - 1
        Xi[i] = g[nxt:] + (g[:nxt] @ Xi[i + 1 :] if nxt else 0.0)
    return Xi


def joint_lstsq_map(Aw, Bv, c) -> np.ndarray:
    """Exact p = 2 minimizer w = -pinv(sqrt(c) Aw) sqrt(c) Bv v (minimum-norm on ties)."""
    s = np.sqrt(c)[:, None]
    A = s * Aw
    if A.size == 0:
        return np.zeros((Aw.shape[1], Bv.shape[1]))
    colscale = np.sqrt((A**2).sum(axis=0))
    colscale[colscale == 0] = 1.0
    X = np.linalg.lstsq(A / colscale, -(s * Bv), rcond=1e-13)[0]
    return X / colscale[:, None]


def select_map(prob: BlockProblem, method: str = "auto") -> np.ndarray:
    """Matrix Xi with xi(v) = Xi v.  method: 'sequential', 'joint' (p = 2 only) or 'auto'."""
    if method == "auto":
        method = "joint" if prob.p == 2 else "sequential"
    if method == "joint":
        if prob.p != 2:
            raise ValueError("joint least squares is only the minimizer for p = 2")
        return joint_lstsq_map(prob.Aw, prob.Bv, prob.c)
    return sequential_map(prob.Aw, prob.Bv, prob.c, prob.p)


def select(prob: BlockProblem, v, method: str = "auto") -> np.ndarray:
    return select_map(prob, method) @ np.asarray(v, float)


def _elimination(Psi_w, tol=1e-10):
    """Pivoted QR of the constraint block: returns (pivot columns, free columns)."""
    e, k = Psi_w.shape
    if e == 0:
        return [], list(range(k))
    if e > k:
        raise ValueError("constraint map not surjective")
    _, R, perm = scipy.linalg.qr(Psi_w, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.size < e or diag[0] == 0 or diag[e - 1] <= tol * diag[0]:
        raise ValueError("constraint map not surjective")
    return list(perm[:e]), list(perm[e:])


def select_constrained_map(prob: BlockProblem, method: str = "auto") -> np.ndarray:
    """Xi with Psi_w Xi v + Psi_v v = 0 and the free part chosen by ``select_map``."""
    k, q = prob.k, prob.Bv.shape[1]
    if prob.Psi_w is None or np.asarray(prob.Psi_w).size == 0:
        return select_map(prob, method)
    Psi_w = np.atleast_2d(np.asarray(prob.Psi_w, float))
    Psi_v = np.atleast_2d(np.asarray(prob.Psi_v, float))
    piv, free = _elimination(Psi_w)
    Pp = Psi_w[:, piv]
    Pinv = np.linalg.inv(Pp)
    # w_piv = L_free w_free + L_v v
    L_free = -Pinv @ Psi_w[:, free]
    L_v = -Pinv @ Psi_v
    Aw_free = prob.Aw[:, free] + prob.Aw[:, piv] @ L_free
    Bv_new = prob.Bv + prob.Aw[:, piv] @ L_v
    Xi = np.zeros((k, q))
    if free:
        sub = BlockProblem(Aw_free, Bv_new, prob.c, prob.p)
        Xf = select_map(sub, method)
        Xi[free] = Xf
        Xi[piv] = L_free @ Xf + L_v
    else:
        Xi[piv] = L_v
    return Xi


def select_constrained(prob: BlockProblem, v, method: str = "auto") -> np.ndarray:
    return select_constrained_map(prob, method) @ np.asarray(v, float)


def guarantee_factor(p: float, k: int) -> float:
    return (1.0 + 2.0**p) ** k
