"""Decomposition solver for the chance-constrained parallel machine
scheduling problem (CC-PMSP)."""

from .decomposition import SolveOptions, SolveReport, solve_ccpmsp
from .instances import GenConfig, make_instance
from .model import Candidate, Cut, Instance, Scenario

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "Cut",
    "GenConfig",
    "Instance",
    "Scenario",
    "SolveOptions",
    "SolveReport",
    "make_instance",
    "solve_ccpmsp",
    "__version__",
]
