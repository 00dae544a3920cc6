"""Quasiperiodically forced circle diffeomorphisms and their mode-locking toolkit."""

__version__ = "0.1.0"

from .circle import (
    CircleInterval,
    ConfigError,
    ConvergenceError,
    DiophantineSpec,
    FamilyStructureError,
    QpfError,
    circle_dist,
    interval_dist,
    verify_diophantine,
    wrap,
)
from .families import FamilyConstants, QpfFamily, QpfMap, eval_ap_profile, load_family, propose_regions

__all__ = [
    "__version__",
    "CircleInterval",
    "ConfigError",
    "ConvergenceError",
    "DiophantineSpec",
    "FamilyConstants",
    "FamilyStructureError",
    "QpfError",
    "QpfFamily",
    "QpfMap",
    "circle_dist",
    "eval_ap_profile",
    "interval_dist",
    "load_family",
    "propose_regions",
    "verify_diophantine",
    "wrap",
]
