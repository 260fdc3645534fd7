"""Linear expressions over named parameter blocks.

A ``Lin`` maps block names to coefficient arrays of shape (..., dim_block); its value is
sum_b terms[b] @ value(b).  Blocks are the atom data 'f', the top anchor 'P0', and one
block per keystone jet.  Each keystone block is itself defined by a ``Lin`` over 'f' and
earlier blocks, which ``Blocks`` records so everything can be resolved to matrices over f.
"""

from __future__ import annotations

import numpy as np


class Lin:
    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {k: np.asarray(v, float) for k, v in (terms or {}).items()}

    @classmethod
    def block(cls, name: str, dim: int) -> "Lin":
        return cls({name: np.eye(dim)})

    @classmethod
    def zeros(cls, shape, name: str, dim: int) -> "Lin":
        return cls({name: np.zeros(tuple(shape) + (dim,))})

    def copy(self) -> "Lin":
        return Lin({k: v.copy() for k, v in self.terms.items()})

    @property
    def shape(self):
        for v in self.terms.values():
            return v.shape[:-1]
        return ()

    def __add__(self, other: "Lin") -> "Lin":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v
        return Lin(out)

    def __sub__(self, other: "Lin") -> "Lin":
        return self + other * -1.0

    def __mul__(self, s) -> "Lin":
        """Scalar or broadcast multiply on the leading dimensions."""
        s = np.asarray(s, float)
        return Lin({k: v * s[..., None] if s.ndim else v * s for k, v in self.terms.items()})

    __rmul__ = __mul__

    def left(self, M) -> "Lin":
        """Apply the matrix M (q, r) on the first axis of every term (r, ..., dim)."""
        M = np.asarray(M, float)
        return Lin({k: np.tensordot(M, v, axes=(1, 0)) for k, v in self.terms.items()})

    def take(self, idx, axis: int = 0) -> "Lin":
        return Lin({k: np.take(v, idx, axis=axis) for k, v in self.terms.items()})

    @staticmethod
    def stack(items, dims: dict) -> "Lin":
        """Concatenate along axis 0; dims gives the block sizes for missing terms."""
        items = [it for it in items if it.shape and it.shape[0] > 0]
        names = []
        for it in items:
            for k in it.terms:
                if k not in names:
                    names.append(k)
        out = {}
        for k in names:
            parts = []
            for it in items:
                if k in it.terms:
                    parts.append(it.terms[k])
                else:
                    parts.append(np.zeros(it.shape + (dims[k],)))
            out[k] = np.concatenate(parts, axis=0)
        return Lin(out)

    def scatter_into(self, shape_lead, idx) -> "Lin":
        """Place rows at positions idx of a zero Lin with leading shape (len, ...)."""
        out = {}
        for k, v in self.terms.items():
            z = np.zeros(tuple(shape_lead) + v.shape[1:])
            z[idx] = v
            out[k] = z
        return Lin(out)

    def nonzero_blocks(self, tol=0.0) -> list:
        return [k for k, v in self.terms.items() if np.any(np.abs(v) > tol)]


class Blocks:
    """Registry of parameter blocks with their defining expressions."""

    def __init__(self, n_atoms: int, D: int):
        self.dims = {"f": n_atoms, "P0": D}
        self.defs = {}  # name -> Lin over earlier blocks, shape (dim,)
        self.meta = {}
        self.order = []

    def add(self, name: str, definition: Lin, **meta) -> Lin:
        dim = definition.shape[0]
        self.dims[name] = dim
        self.defs[name] = definition
        self.meta[name] = meta
        self.order.append(name)
        return Lin.block(name, dim)

    def resolve_to(self, bases=("f", "P0")) -> dict:
        """Each block as a dict base -> matrix (dim, dim_base)."""
        out = {b: {b: np.eye(self.dims[b])} for b in bases}
        for name in self.order:
            acc = {b: np.zeros((self.dims[name], self.dims[b])) for b in bases}
            for k, v in self.defs[name].terms.items():
                for b, M in out[k].items():
                    acc[b] = acc[b] + v @ M
            out[name] = acc
        return out

    def realize(self, lin: Lin, resolved: dict, base: str = "f") -> np.ndarray:
        """Dense coefficient array over one base block."""
        res = None
        for k, v in lin.terms.items():
            if base not in resolved[k]:
                continue
            part = v @ resolved[k][base]
            res = part if res is None else res + part
        if res is None:
            res = np.zeros(lin.shape + (self.dims[base],))
        return res
