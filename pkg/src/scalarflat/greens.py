"""Green's function of the flat unit ball and the punctured models built from it.

``G = Phi + corrector`` with ``Phi = c_n |x|^{2-n}`` handled analytically and
the corrector harmonic with ``B corrector = -B Phi`` on the sphere, so the
singularity is never discretised.  ``w = a G + c`` is then positive and
flat-harmonic away from the puncture and defines a positive
:func:`~scalarflat.geometry.punctured_ball` model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import assemble, solve_linear
from .errors import NonPositiveWeights, UnsupportedModel, UnsupportedPuncture
from .geometry import fundamental_constant, punctured_ball
from .mesh import Field, Grid, build_grid, geometric_nodes

HARMONIC_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GreensResult:
    p: tuple
    n: int
    G: Field
    corrector: Field
    B_residual: float
    positivity_margin: float

    @property
    def corrector_constant(self) -> float:
        """The corrector in units of ``c_n`` (exactly 1 for the ball)."""
        return float(np.mean(self.corrector.values)) / fundamental_constant(self.n)


def fundamental_solution(n: int, r):
    return fundamental_constant(n) * np.asarray(r, dtype=float) ** (2 - n)


def fundamental_solution_dr(n: int, r):
    return fundamental_constant(n) * (2 - n) * np.asarray(r, dtype=float) ** (1 - n)


def greens_function(ball, p=None, resolution: int = 4097, rho: float = 2.0**-12) -> GreensResult:
    """Green's function of ``ball`` with pole at the centre and ``B G = 0``.

    ``G`` is sampled on ``[rho, 1]`` (graded towards the pole); the
    corrector lives on a grid of the whole ball.
    """
    if ball.kind != "flat_ball":
        raise UnsupportedModel("the Green's construction needs the flat unit ball")
    if p is not None and np.any(np.asarray(p, dtype=float) != 0.0):
        raise UnsupportedPuncture("only the centred puncture is supported")
    n = ball.n
    grid = build_grid(ball, resolution)
    system = assemble(ball, grid, lam=0.0, gamma=0.0)
    # B_delta Phi on the unit sphere, from the analytic derivative
    b_phi = fundamental_solution_dr(n, 1.0) + 0.5 * (n - 2) * fundamental_solution(n, 1.0)
    rhs = np.zeros(grid.size)
    rhs[grid.boundary_index] = -b_phi
    corrector = solve_linear(system, rhs)
    b_corr = system.apply(corrector)[grid.boundary_index]
    B_residual = float(np.max(np.abs(b_phi + b_corr)))

    r = geometric_nodes(rho, 1.0, resolution, min((1.0 / rho) ** (1.0 / (resolution - 1)), 1.2))
    g_grid = Grid(r, None, n, "outer", "inner")
    G = Field(g_grid, fundamental_solution(n, r) + np.interp(r, grid.r, corrector.values))
    return GreensResult((0.0,) * n, n, G, corrector, B_residual, G.min())


def superposition(greens: GreensResult, a: float, c: float) -> Field:
    """``a G + c`` on the Green's function grid."""
    return greens.G.with_values(a * greens.G.values + c)


def build_punctured_model(ball, a: float, c: float, greens: GreensResult | None = None):
    """Positive punctured model with ``w = a G_0 + c``."""
    if not (a > 0 and c > 0):
        raise NonPositiveWeights(f"weights must be positive (a={a}, c={c})")
    greens = greens_function(ball) if greens is None else greens
    return punctured_ball(ball.n, a, c, corrector=greens.corrector_constant)


@dataclass(frozen=True)
class PositivityReport:
    positive: bool
    mean_curvature_margin: float
    harmonic_residual: float

    def __bool__(self):
        return self.positive


def positivity_check(model, radii=None) -> PositivityReport:
    """Positive mean curvature and a numerically harmonic conformal factor.

    The harmonic residual is ``|Delta w|`` relative to the size of its
    terms, sampled over the chart.
    """
    if radii is None:
        lo = model.inner if model.inner > 0 else 1e-6
        hi = model.outer if np.isfinite(model.outer) else 1e6
        radii = np.geomspace(max(lo, 1e-6), hi, 257)
    radii = np.asarray(radii, dtype=float)
    w_rr = model.w_rr(radii)
    drift = (model.n - 1) * model.w_r(radii) / radii
    scale = np.abs(w_rr) + np.abs(drift) + np.abs(model.w(radii)) * 1e-300
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, np.abs(w_rr + drift) / np.maximum(scale, 1e-300), 0.0)
    residual = float(np.max(rel))
    margin = float(model.boundary_h)
    ok = bool(model.scalar_flat and margin > 0 and residual <= HARMONIC_TOL)
    return PositivityReport(ok, margin, residual)
