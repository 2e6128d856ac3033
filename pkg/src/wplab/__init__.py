"""Semiclassical wave-packet laboratory for a two-level nonlinear
Schrodinger system with a matrix-valued potential."""

from . import classical, envelope, experiments, fields, potential, solver
from .errors import WPLabError

__version__ = "0.1.0"

__all__ = ["classical", "envelope", "experiments", "fields", "potential",
           "solver", "WPLabError", "__version__"]
