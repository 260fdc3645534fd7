"""Seeded random desk instances used by the acceptance checks and the audit command."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import AtomicMeasure, normalize


@dataclass
class Instance:
    name: str
    m: int
    measure: AtomicMeasure


def random_instance(rng: np.random.Generator, m: int, n_atoms: int, p: float = 2.0, p_inf: float = 0.2,
                    name: str = "") -> Instance:
    x = np.sort(rng.random(n_atoms))
    w = 10.0 ** rng.uniform(-1, 2, n_atoms)
    w[rng.random(n_atoms) < p_inf] = np.inf
    f = rng.normal(size=n_atoms)
    mu = normalize(x.reshape(-1, 1), w, f, m, p)
    return Instance(name or f"m{m}_n{n_atoms}", m, mu)


def desk_suite(seed: int = 0, count: int = 30, p: float = 2.0) -> list:
    """count instances alternating m = 1, 2 with 2 to 12 atoms and mixed finite/infinite weights."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        m = 1 + k % 2
        n_atoms = int(rng.integers(2, 13))
        out.append(random_instance(rng, m, n_atoms, p, name=f"s{seed}_{k:02d}_m{m}_N{n_atoms}"))
    return out
