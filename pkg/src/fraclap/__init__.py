"""Numerical tools for critical fractional Sobolev quotients with lower-order perturbations."""

from .eigensolver import ConvergenceError, EigenResult, poincare_lambda1
from .functionals import (PinnedConstants, ProblemParams, critical_exponent, pin_constants,
                          pin_hardy_constant, pin_sobolev_constant, rayleigh)
from .geometry import DomainMask, hardy_weight, make_ball_mask, make_cube_mask, make_mask
from .minimizer import groundstate, lambda_star, s_curve
from .spectral import Field, GridSpec, apply_fraclap, make_grid, seminorm_sq
from .testfunctions import talenti_bubble, verify_lemma31

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DomainMask", "EigenResult", "Field", "GridSpec", "PinnedConstants",
    "ProblemParams", "apply_fraclap", "critical_exponent", "groundstate", "hardy_weight",
    "lambda_star", "make_ball_mask", "make_cube_mask", "make_grid", "make_mask", "pin_constants",
    "pin_hardy_constant", "pin_sobolev_constant", "poincare_lambda1", "rayleigh", "s_curve",
    "seminorm_sq", "talenti_bubble", "verify_lemma31",
]
