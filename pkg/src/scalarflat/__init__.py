"""Complete scalar-flat conformal metrics with prescribed boundary mean curvature.

Discrete realisation of the barrier / sub- and super-solution / monotone
iteration construction on conformally flat radial model manifolds, with an
independent verification path.
"""

from .barrier import BarrierResult, build_barrier, exhaust_barrier, select_mu, solve_PR
from .bracketing import BracketPair, check_subsolution, check_supersolution, select_epsilon_delta
from .elliptic import assemble, first_eigenvalue, m_matrix_check, solve_linear
from .geometry import (ManifoldModel, classify_end, conformal_mean_curvature,
                       conformal_scalar_curvature, flat_ball, flat_exterior, punctured_ball)
from .greens import build_punctured_model, greens_function, positivity_check
from .iterate import exhaust_solve, iterate_step, select_gamma, solve_compact_piece
from .mesh import Field, Grid, build_grid, graded_family, nested_grids
from .verify import SolveReport, completeness_check, conformal_check, residual_report

__version__ = "0.1.0"

__all__ = [
    "BarrierResult", "BracketPair", "Field", "Grid", "ManifoldModel", "SolveReport",
    "assemble", "build_barrier", "build_grid", "build_punctured_model", "check_subsolution",
    "check_supersolution", "classify_end", "completeness_check", "conformal_check",
    "conformal_mean_curvature", "conformal_scalar_curvature", "exhaust_barrier",
    "exhaust_solve", "first_eigenvalue", "flat_ball", "flat_exterior", "graded_family",
    "greens_function", "iterate_step", "m_matrix_check", "nested_grids", "positivity_check",
    "punctured_ball", "residual_report", "select_epsilon_delta", "select_gamma", "select_mu",
    "solve_PR", "solve_compact_piece", "solve_linear",
]
