"""Run configuration shared by the oracle, the decomposition and the operator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .jets import MAX_M, MAX_N


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    m: int = 1
    n: int = 1
    p: float = 2.0
    eps: float = 0.1  # single basis constant standing in for eps0/C0 and eps(A)
    max_depth: int = 40
    grid: int = 512  # cells per axis for the discretized 1D path
    grid2: int = 16  # cells per axis for 2D tensor grids
    oracle: str = "exact"  # "exact" (n=1, p=2 splines) or "irls"
    leaf_height: int = 2  # labels this close to M are solved by the oracle directly
    pin_leaves: bool = True  # n = 1: neighbouring leaves share their jet at the common cube end
    pin_window: float = 3.0  # that jet comes from a local solve on both cubes dilated this much; 0 = mean keystone jet
    refine: int = 16  # uniform extra knots when an L^p anchor term is present
    irls_damping: float = 1e-8
    irls_max_iter: int = 200
    irls_tol: float = 1e-6
    max_recursion: int = 12
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.m <= MAX_M):
            raise ConfigError(f"m must lie in 1..{MAX_M}")
        if self.n not in range(1, MAX_N + 1):
            raise ConfigError(f"n must lie in 1..{MAX_N}")
        if not self.p > self.n:
            raise ConfigError("p must exceed n")
        if self.oracle not in ("exact", "irls"):
            raise ConfigError("oracle must be 'exact' or 'irls'")
        if self.oracle == "exact" and (self.n, self.p) != (1, 2.0):
            raise ConfigError("the exact oracle needs n = 1 and p = 2")
        if self.pin_window != 0 and self.pin_window < 1:
            raise ConfigError("pin_window must be 0 or at least 1")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")

    @property
    def exact(self) -> bool:
        return self.oracle == "exact"

    def with_(self, **kw) -> "Config":
        return replace(self, **kw)

    def to_json(self) -> dict:
        return asdict(self)


def default_config(m=1, n=1, p=2.0, **kw) -> Config:
    """Exact oracle when it applies, IRLS otherwise."""
    if "oracle" not in kw:
        kw["oracle"] = "exact" if (n, float(p)) == (1, 2.0) else "irls"
    return Config(m=m, n=n, p=float(p), **kw)
