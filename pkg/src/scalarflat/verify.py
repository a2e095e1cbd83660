"""Independent checks of a converged solution.

Everything here goes through the fourth-order finite-difference path of
:mod:`scalarflat.fd` (via :mod:`scalarflat.geometry`), never through the
solver's assembled operator, so a wrong assembly cannot certify itself.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid

from .bracketing import boundary_values
from .errors import NonPositiveConformalFactor, WrongExponent
from .geometry import (conformal_boundary_operator, conformal_laplacian,
                       conformal_mean_curvature, conformal_scalar_curvature, critical_exponent)
from .io import write_json
from .mesh import Field

ORACLE_ORDER = 4


@dataclass
class SolveReport:
    interior_residual: float | None = None
    boundary_residual: float | None = None
    scalar_flat_error: float | None = None
    mean_curvature_error: float | None = None
    completeness_lengths: list | None = None
    u_min: float | None = None
    u_max: float | None = None

    def merge(self, other: "SolveReport") -> "SolveReport":
        mine = asdict(self)
        for key, value in asdict(other).items():
            if value is not None:
                mine[key] = value
        return SolveReport(**mine)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        write_json(self.to_dict(), path)


def _positive(u: Field):
    if u.min() <= 0:
        raise NonPositiveConformalFactor(f"min u = {u.min():.3e}")


def residual_report(model, grid, u: Field, f, beta: float) -> SolveReport:
    """``sup |Delta_g u|`` inside and ``sup |B_g u - (n-2)/2 f u^beta|`` on dM."""
    _positive(u)
    lap = conformal_laplacian(model, grid, u, ORACLE_ORDER)[grid.interior_index]
    bu = conformal_boundary_operator(model, grid, u, ORACLE_ORDER)
    ub = u.values[grid.boundary_index]
    rhs = 0.5 * (model.n - 2) * boundary_values(grid, f) * ub**beta
    return SolveReport(interior_residual=float(np.max(np.abs(lap), initial=0.0)),
                       boundary_residual=float(np.max(np.abs(bu - rhs))),
                       u_min=u.min(), u_max=u.max())


def conformal_check(model, grid, u: Field, f, beta: float | None = None) -> SolveReport:
    """Curvatures of ``u^{4/(n-2)} g``: ``sup |R|`` and ``sup |h - f|``.

    Only meaningful at the critical exponent, where the equation says that
    ``f`` is the boundary mean curvature of the new metric.
    """
    beta = critical_exponent(model.n) if beta is None else beta
    if not np.isclose(beta, critical_exponent(model.n), rtol=0, atol=1e-12):
        raise WrongExponent(f"beta = {beta} is not the critical exponent "
                            f"{critical_exponent(model.n)} for n = {model.n}")
    _positive(u)
    R = conformal_scalar_curvature(model, grid, u, ORACLE_ORDER)
    h = conformal_mean_curvature(model, grid, u, ORACLE_ORDER)
    return SolveReport(scalar_flat_error=float(np.max(np.abs(R), initial=0.0)),
                       mean_curvature_error=float(np.max(np.abs(h - boundary_values(grid, f)))),
                       u_min=u.min(), u_max=u.max())


@dataclass(frozen=True)
class Completeness:
    cuts: list
    lengths: list
    increasing: bool


def ray_length(model, u: Field, cut: float | None = None) -> float:
    """Shortest ``u^{4/(n-2)} g``-length of a radial ray from dM to the cut node."""
    grid = u.grid
    n = model.n
    r = grid.r
    k = grid.cut_k if cut is None else int(np.argmin(np.abs(r - cut)))
    lo, hi = sorted((grid.boundary_k, k))
    rr = r[lo:hi + 1]
    U = u.as_array()[lo:hi + 1]
    integrand = (U * model.w(rr)[:, None]) ** (2.0 / (n - 2))
    return float(np.min(trapezoid(integrand, rr, axis=0)))


def completeness_check(model, solutions, cuts=None) -> Completeness:
    """Ray lengths along a cut schedule, as evidence of completeness.

    ``solutions`` is either a list of fields (one per piece, measured to
    each piece's own cut) or one field measured to each of ``cuts``.
    """
    if isinstance(solutions, Field):
        if cuts is None:
            raise ValueError("a single field needs a cut schedule")
        lengths = [ray_length(model, solutions, c) for c in cuts]
        cuts = [float(c) for c in cuts]
    else:
        lengths = [ray_length(model, s) for s in solutions]
        cuts = [s.grid.cut_radius for s in solutions]
    increasing = bool(np.all(np.diff(lengths) > 0))
    return Completeness(cuts, lengths, increasing)


def full_report(model, grid, u: Field, f, beta: float, completeness=None) -> SolveReport:
    """Residuals, plus curvatures at the critical exponent, plus ray lengths."""
    report = residual_report(model, grid, u, f, beta)
    if np.isclose(beta, critical_exponent(model.n), rtol=0, atol=1e-12):
        report = report.merge(conformal_check(model, grid, u, f, beta))
    if completeness is not None:
        report.completeness_lengths = list(completeness.lengths)
    return report
