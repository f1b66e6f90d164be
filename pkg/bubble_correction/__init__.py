"""Polynomial corrections to bubble profiles and the balance laws of simple blow-up points."""

from bubble_correction.integrals import moment_integral
from bubble_correction.polynomial import Polynomial
from bubble_correction.reduction import apply_L, coefficient_table, solve_gamma, solve_general

__version__ = "0.1.0"

__all__ = [
    "Polynomial",
    "apply_L",
    "coefficient_table",
    "moment_integral",
    "solve_gamma",
    "solve_general",
]
