"""Certified sub- and super-solutions ``u_- = eps v`` and ``u+ = eps v + delta``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import assemble
from .errors import BracketingFailed, GridMismatch, PositivityRequired
from .mesh import Field, Grid, restrict

INTERIOR_TOL = 1e-10
MAX_HALVINGS = 60


@dataclass(frozen=True)
class Certificate:
    boundary_margin: float
    interior_margin: float

    @property
    def certified(self) -> bool:
        return self.boundary_margin >= 0.0 and self.interior_margin >= -INTERIOR_TOL

    def __float__(self):
        return self.boundary_margin


@dataclass(frozen=True, eq=False)
class BracketPair:
    epsilon: float
    delta: float
    mu: float
    u_minus: Field
    u_plus: Field
    sub_margin: float
    super_margin: float
    halvings: int = 0

    @property
    def grid(self) -> Grid:
        return self.u_plus.grid

    @property
    def lower_bound(self) -> float:
        return self.epsilon * self.mu

    @property
    def upper_bound(self) -> float:
        return self.epsilon * (1.0 + self.mu) + self.delta


def boundary_values(grid: Grid, f) -> np.ndarray:
    """``f`` as one value per dM node: scalar, callable of theta, or samples."""
    m = grid.boundary_index.size
    if callable(f):
        theta = np.zeros(m) if grid.theta is None else grid.theta
        vals = np.broadcast_to(np.asarray(f(theta), dtype=float), (m,))
    else:
        vals = np.asarray(f.values if isinstance(f, Field) else f, dtype=float)
        if vals.ndim == 0:
            vals = np.full(m, float(vals))
    if vals.shape != (m,):
        raise GridMismatch(f"{vals.size} boundary values for {m} dM nodes")
    return np.array(vals, dtype=float)


def _operator_rows(model, grid, u, system=None):
    if system is None:
        system = assemble(model, grid, lam=0.0, gamma=0.0)
    out = system.apply(u)
    return out[grid.interior_index], out[grid.boundary_index]


def _nonlinear(model, grid, u, f, beta):
    ub = u.values[grid.boundary_index]
    return 0.5 * (model.n - 2) * boundary_values(grid, f) * ub**beta


def check_subsolution(model, grid: Grid, candidate: Field, f, beta: float,
                    system=None) -> Certificate:
    """``min((n-2)/2 f u^beta - B_g u)`` on dM and ``min Delta_g u`` inside."""
    lap, bu = _operator_rows(model, grid, candidate, system)
    rhs = _nonlinear(model, grid, candidate, f, beta)
    return Certificate(float(np.min(rhs - bu)), float(np.min(lap, initial=np.inf)))


def check_supersolution(model, grid: Grid, candidate: Field, f, beta: float,
                      system=None) -> Certificate:
    """``min(B_g u - (n-2)/2 f u^beta)`` on dM and ``min(-Delta_g u)`` inside."""
    lap, bu = _operator_rows(model, grid, candidate, system)
    rhs = _nonlinear(model, grid, candidate, f, beta)
    return Certificate(float(np.min(bu - rhs)), float(np.min(-lap, initial=np.inf)))


def barrier_on(barrier, grid: Grid) -> Field:
    """The shifted barrier ``v`` sampled onto ``grid``.

    ``grid`` should be a piece of the barrier's master grid so the samples
    stay discrete harmonic; a radial barrier is copied along every ray of a
    polar grid.
    """
    v = barrier.v if hasattr(barrier, "v_infinity") else barrier
    if grid.theta is not None and v.grid.theta is None:
        radial = Grid(grid.r, None, grid.n, grid.boundary_at, grid.cut_at, grid.q)
        vr = restrict(v, v.grid, radial).values
        return Field(grid, np.repeat(vr, grid.shape[1]))
    return restrict(v, v.grid, grid)


def select_epsilon_delta(model, grid: Grid, barrier, f, beta: float) -> BracketPair:
    """Halve ``delta`` from 1 with ``eps = delta**2`` until both certificates hold."""
    if not model.is_positive:
        raise PositivityRequired("sub/super-solutions need a positive model (min h(g) > 0)")
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    if barrier.mu is None or barrier.B_margin is None or barrier.B_margin <= 0:
        raise BracketingFailed("barrier is not certified (B_margin <= 0)")
    v = barrier_on(barrier, grid)
    system = assemble(model, grid, lam=0.0, gamma=0.0)
    delta = 1.0
    for halvings in range(MAX_HALVINGS + 1):
        eps = delta * delta
        u_minus = v.with_values(eps * v.values)
        u_plus = v.with_values(eps * v.values + delta)
        sub = check_subsolution(model, grid, u_minus, f, beta, system)
        sup = check_supersolution(model, grid, u_plus, f, beta, system)
        if sub.certified and sup.certified:
            return BracketPair(eps, delta, float(barrier.mu), u_minus, u_plus,
                               sub.boundary_margin, sup.boundary_margin, halvings)
        delta *= 0.5
    raise BracketingFailed(f"no certified bracket after {MAX_HALVINGS} halvings")
