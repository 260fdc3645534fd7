"""Linear extension operators for L^{m,p} + L^p(dmu) on finite atomic measures."""

from .config import Config, ConfigError, default_config
from .measures import AtomicMeasure, Box, InputError, normalize, read_atoms
from .oracle import InfeasibleError, j_norm
from .extension import ExtensionResult, extend, top_extend

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure",
    "Box",
    "Config",
    "ConfigError",
    "ExtensionResult",
    "InfeasibleError",
    "InputError",
    "default_config",
    "extend",
    "j_norm",
    "normalize",
    "read_atoms",
    "top_extend",
]
