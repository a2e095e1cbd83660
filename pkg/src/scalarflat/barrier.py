"""Harmonic barrier by exhaustion.

On growing pieces ``M_R`` the harmonic function ``v_R`` with ``v_R = 0`` on
dM and ``v_R = 1`` on the cut decreases with ``R`` (compare on the cut:
``v_R' <= 1 = v_R``) and tends to ``v_inf``.
The raw sequence converges only like ``R^{-p}`` (``p = n - 2`` for the
supported models), so the limit is estimated by Richardson extrapolation
with an exponent measured from the sequence itself.  The extrapolant is a
linear combination of discrete-harmonic fields on a nested grid and so is
itself discrete harmonic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .elliptic import assemble, solve_linear
from .errors import HopfViolated, NotConverged, PositivityRequired
from .mesh import Field, Grid, nested_grids, restrict

MONOTONE_TOL = 1e-10
CONVERGED_TOL = 1e-8
ACCEPT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class BarrierResult:
    v_infinity: Field
    hopf_margin: float
    exhaustion_history: list = field(default_factory=list)
    rate: float = float("nan")
    monotonicity_violations: int = 0
    converged: bool = False
    mu: float | None = None
    B_margin: float | None = None

    @property
    def grid(self) -> Grid:
        return self.v_infinity.grid

    @property
    def v(self) -> Field:
        if self.mu is None:
            raise ValueError("mu has not been selected")
        return self.v_infinity.with_values(self.v_infinity.values + self.mu)


def solve_PR(model, grid: Grid, jobs_system=None) -> Field:
    """Harmonic ``v_R``: 0 on dM, 1 on the cut."""
    if grid.compact:
        raise ValueError("the exhaustion problem needs a noncompact piece")
    system = jobs_system or assemble(model, grid, lam=0.0, dirichlet_boundary=True)
    b = np.zeros(grid.size)
    b[grid.cut_index] = 1.0
    return solve_linear(system, b)


def _boundary_derivative(model, v: Field) -> np.ndarray:
    """Discrete ``d v / d eta`` for ``v`` vanishing on dM (the solver's stencil)."""
    system = assemble(model, v.grid, lam=0.0, gamma=0.0)
    return system.apply(v)[v.grid.boundary_index]


def _remoteness(model, cut):
    return cut if model.boundary_at == "inner" else 1.0 / cut


def _rate_exponent(x, d):
    """Exponent ``p`` with ``d_k / d_{k-1}`` matching ``x^{-p}`` differences."""
    target = d[-1] / d[-2]

    def gap(p):
        num = x[-2] ** -p - x[-1] ** -p
        den = x[-3] ** -p - x[-2] ** -p
        return num / den - target

    try:
        return brentq(gap, 1e-3, 30.0, xtol=1e-14)
    except ValueError:
        return float("nan")


def exhaust_barrier(model, cuts, resolution: int | None = None, q: float | None = None,
                    angular: int | None = None, jobs: int = 1,
                    master: Grid | None = None) -> BarrierResult:
    """Solve the exhaustion problems on ``cuts`` and extrapolate ``v_inf``.

    ``cuts`` are ordered from the nearest piece to the most remote one (outer
    radii increasing for exterior models, inner radii decreasing for
    punctured ones).  History entries are ``(cut, raw sup-change,
    extrapolated sup-change)`` measured on the first piece.  Pieces are
    subgrids of ``master`` when given, else of :func:`nested_grids`.
    """
    cuts = [float(c) for c in cuts]
    x = np.array([_remoteness(model, c) for c in cuts])
    if len(cuts) < 3 or np.any(np.diff(x) <= 0) or x[-1] / x[0] < 1e2:
        raise ValueError("need >= 3 increasingly remote cuts spanning a factor >= 100")
    if master is not None:
        grids = [master.subgrid(c) for c in cuts]
    else:
        grids = nested_grids(model, cuts, resolution, q, angular)
    x = np.array([_remoteness(model, g.cut_radius) for g in grids])
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            sols = list(pool.map(lambda g: solve_PR(model, g), grids))
    else:
        sols = [solve_PR(model, g) for g in grids]

    first = grids[0]
    on_first = [restrict(s, s.grid, first) for s in sols]
    violations = 0
    for k in range(1, len(sols)):
        prev = sols[k - 1]
        cur = restrict(sols[k], grids[k], grids[k - 1])
        # v_R = 1 on the cut of M_R dominates v_R' there, so v_R is nonincreasing in R
        violations += int(np.max(cur.values - prev.values) > MONOTONE_TOL)
    raw = [np.nan] + [float(np.max(np.abs(on_first[k].values - on_first[k - 1].values)))
                      for k in range(1, len(sols))]

    history = [(grids[0].cut_radius, np.nan, np.nan)]
    extrap, p = [], float("nan")
    for k in range(1, len(sols)):
        change = np.nan
        if k >= 2:
            p = _rate_exponent(x[: k + 1], np.array(raw[1: k + 1]))
            if not np.isfinite(p):
                p = model.n - 2.0
            lo = sols[k - 1]
            hi = restrict(sols[k], grids[k], grids[k - 1])
            wk, wl = x[k] ** p, x[k - 1] ** p
            est = Field(lo.grid, (wk * hi.values - wl * lo.values) / (wk - wl))
            est_first = restrict(est, est.grid, first)
            if extrap:
                change = float(np.max(np.abs(est_first.values - extrap[-1][1].values)))
            else:
                change = float(np.max(np.abs(est_first.values - on_first[k].values)))
            extrap.append((est, est_first))
        history.append((grids[k].cut_radius, raw[k], change))
        if k >= 3 and change < CONVERGED_TOL:
            break

    final_change = history[-1][2]
    if not np.isfinite(final_change) or final_change > ACCEPT_TOL:
        raise NotConverged(f"exhaustion change {final_change:.3e} > {ACCEPT_TOL:g}", history)
    v_inf = extrap[-1][0]
    if v_inf.min() < -1e-12 or v_inf.max() > 1.0 + 1e-12:
        raise NotConverged("extrapolated barrier left [0, 1]", history)
    hopf = float(np.min(-_boundary_derivative(model, v_inf)))
    return BarrierResult(v_inf, hopf, history, float(p), violations,
                         converged=final_change < CONVERGED_TOL)


def select_mu(model, barrier_or_field) -> tuple[float, float]:
    """Half the admissible shift: ``mu = hopf / ((n - 2) max h)``.

    Returns ``(mu, B_margin)`` with ``B_margin = min(-B_g(v_inf + mu))``.
    """
    if not model.is_positive:
        raise PositivityRequired("barrier shift needs a positive model (min h(g) > 0)")
    v_inf = barrier_or_field.v_infinity if isinstance(barrier_or_field, BarrierResult) \
        else barrier_or_field
    dv = _boundary_derivative(model, v_inf)
    hopf = float(np.min(-dv))
    if hopf <= 0:
        raise HopfViolated(f"outward derivative of v_inf not negative (margin {hopf:.3e})")
    h = model.boundary_h_on(v_inf.grid)
    mu = hopf / ((model.n - 2) * h.max())
    b_margin = float(np.min(-(dv + mu * 0.5 * (model.n - 2) * h)))
    return mu, b_margin


def select_mu_from_margin(hopf_margin: float, h_max: float, n: int) -> tuple[float, float]:
    """The shift rule on bare numbers (constant ``h``)."""
    if hopf_margin <= 0:
        raise HopfViolated(f"hopf margin {hopf_margin:.3e} <= 0")
    mu = hopf_margin / ((n - 2) * h_max)
    return mu, hopf_margin - mu * 0.5 * (n - 2) * h_max


def build_barrier(model, cuts, resolution: int | None = None, q: float | None = None,
                  angular: int | None = None, jobs: int = 1,
                  master: Grid | None = None) -> BarrierResult:
    """Exhaustion plus the shift ``mu``: the full barrier ``v = v_inf + mu``."""
    result = exhaust_barrier(model, cuts, resolution, q, angular, jobs, master)
    mu, b_margin = select_mu(model, result)
    return replace(result, mu=mu, B_margin=b_margin)
