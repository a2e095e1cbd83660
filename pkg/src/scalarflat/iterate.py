"""Monotone iteration on compact pieces and the exhaustion limit.

Each step solves the linear problem

    (Delta_g - lam) u_i = -lam u_{i-1}                      inside,
    B_g u_i + gam u_i = (n-2)/2 f u_{i-1}^beta + gam u_{i-1}  on dM,
    u_i = u_{i-1}                                          on N,

which, started at a super-solution, decreases monotonically towards a
solution while staying above the sub-solution.  ``1/lam`` acts as an
implicit time step: a piece of conformal size ``S`` needs roughly
``lam S^2`` steps, so large pieces want a small ``lam``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .bracketing import BracketPair, boundary_values
from .elliptic import assemble, solve_linear
from .errors import BracketingFailed, MonotonicityViolated, NotConverged, PositivityLost
from .mesh import Field, Grid, restrict

MONOTONE_TOL = 1e-10
DEFAULT_TOL = 1e-9
MAX_STEPS = 10_000


@dataclass(frozen=True)
class StepRecord:
    step: int
    sup_change: float
    monotonicity: float  # max(u_i - u_{i-1}), should be <= 0
    bracket: float  # max(u_- - u_i), should be <= 0


@dataclass(eq=False)
class IterationTrace:
    lam: float
    gamma: float
    records: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def sup_changes(self) -> np.ndarray:
        return np.array([r.sup_change for r in self.records])

    @property
    def max_monotonicity(self) -> float:
        return max((r.monotonicity for r in self.records), default=-np.inf)

    @property
    def max_bracket(self) -> float:
        return max((r.bracket for r in self.records), default=-np.inf)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "sup_change", "monotonicity", "bracket"])
            for rec in self.records:
                w.writerow([rec.step, f"{rec.sup_change:.17g}", f"{rec.monotonicity:.17g}",
                            f"{rec.bracket:.17g}"])


def select_gamma(f, beta: float, u_plus: Field, n: int) -> float:
    """``1.1 (n-2)/2 beta max|f| (max u+)^(beta-1)`` over dM."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    fb = boundary_values(u_plus.grid, f)
    ub = u_plus.values[u_plus.grid.boundary_index]
    return 1.1 * 0.5 * (n - 2) * beta * float(np.max(np.abs(fb))) * float(ub.max()) ** (beta - 1)


def step_rhs(model, grid: Grid, u_prev: Field, f, beta: float, lam: float,
             gamma: float) -> np.ndarray:
    v = u_prev.values
    b = -lam * v
    bidx = grid.boundary_index
    ub = v[bidx]
    b[bidx] = 0.5 * (model.n - 2) * boundary_values(grid, f) * ub**beta + gamma * ub
    cidx = grid.cut_index
    b[cidx] = v[cidx]
    return b


def iterate_step(model, grid: Grid, u_prev: Field, f, beta: float, lam: float = 1.0,
                 gamma: float = 0.0, system=None) -> Field:
    """One linear solve of the monotone scheme."""
    if u_prev.min() <= 0:
        raise PositivityLost(f"previous iterate has min {u_prev.min():.3e}")
    if system is None:
        system = assemble(model, grid, lam=lam, gamma=gamma)
    u = solve_linear(system, step_rhs(model, grid, u_prev, f, beta, lam, gamma))
    if u.min() <= 0:
        raise PositivityLost(f"iterate lost positivity (min {u.min():.3e}); check lam/gamma")
    return u


def solve_compact_piece(model, grid: Grid, bracket: BracketPair, f, beta: float,
                        tol: float = DEFAULT_TOL, lam: float = 1.0,
                        gamma: float | None = None, u0: Field | None = None,
                        max_steps: int = MAX_STEPS):
    """Iterate from ``u+`` (or ``u0``) until the sup-change drops below ``tol``.

    Monotone non-increase and the lower bracket are checked at every step
    and abort the run when violated beyond ``1e-10``.
    """
    u_minus = restrict(bracket.u_minus, bracket.u_minus.grid, grid)
    u_plus = restrict(bracket.u_plus, bracket.u_plus.grid, grid)
    if gamma is None:
        gamma = select_gamma(f, beta, u_plus, model.n)
    u = u_plus if u0 is None else u0
    system = assemble(model, grid, lam=lam, gamma=gamma)
    trace = IterationTrace(float(lam), float(gamma))
    for step in range(1, max_steps + 1):
        nxt = iterate_step(model, grid, u, f, beta, lam, gamma, system)
        diff = nxt.values - u.values
        mono = float(diff.max())
        brk = float(np.max(u_minus.values - nxt.values))
        change = float(np.abs(diff).max())
        trace.records.append(StepRecord(step, change, mono, brk))
        if mono > MONOTONE_TOL:
            raise MonotonicityViolated(step, mono, "monotonicity")
        if brk > MONOTONE_TOL:
            raise MonotonicityViolated(step, brk, "bracket")
        u = nxt
        if change < tol:
            trace.converged = True
            return u, trace
    raise NotConverged(f"no convergence to {tol:g} in {max_steps} steps", trace)


@dataclass(eq=False)
class ExhaustionResult:
    solution: Field
    history: list  # (cut, sup-change on the first piece)
    pieces: list  # converged field per piece
    traces: list
    converged: bool

    @property
    def grid(self) -> Grid:
        return self.solution.grid


def exhaust_solve(model, pieces, bracket: BracketPair, f, beta: float,
                  tol: float = DEFAULT_TOL, exhaust_tol: float | None = None,
                  lam: float = 1.0, u0=None, max_steps: int = MAX_STEPS,
                  min_pieces: int = 3) -> ExhaustionResult:
    """Solve on growing nested ``pieces`` and watch the solutions settle.

    ``bracket`` must live on a grid containing every piece (normally the
    largest one).  One ``(eps, delta)`` serves all pieces, so the bounds
    ``eps mu <= u <= eps (1 + mu) + delta`` are checked on each.  Stops once
    the restricted sup-change on the first piece is below ``10 exhaust_tol``
    and at least ``min_pieces`` pieces are done.
    ``u0`` is an optional callable ``grid -> Field`` for the starting iterate;
    the bracket bounds follow from starting at ``u+`` and are only asserted
    then.
    """
    pieces = list(pieces)
    if len(pieces) < max(3, min_pieces):
        raise ValueError("need at least 3 pieces (and min_pieces)")
    exhaust_tol = tol if exhaust_tol is None else exhaust_tol
    first = pieces[0]
    lo = bracket.lower_bound - MONOTONE_TOL
    hi = bracket.upper_bound + MONOTONE_TOL
    history, sols, traces = [], [], []
    prev = None
    change = np.nan
    for grid in pieces:
        start = None if u0 is None else u0(grid)
        u, trace = solve_compact_piece(model, grid, bracket, f, beta, tol, lam,
                                       u0=start, max_steps=max_steps)
        if u0 is None and (u.min() < lo or u.max() > hi):
            raise BracketingFailed(f"piece with cut {grid.cut_radius:.6g} left "
                                   f"[{lo:.6g}, {hi:.6g}]: [{u.min():.6g}, {u.max():.6g}]")
        on_first = restrict(u, grid, first)
        change = np.nan if prev is None else float(np.max(np.abs(on_first.values - prev.values)))
        history.append((grid.cut_radius, change))
        sols.append(u)
        traces.append(trace)
        prev = on_first
        if len(sols) >= min_pieces and change < 10.0 * exhaust_tol:
            break
    converged = bool(np.isfinite(change) and change < 10.0 * exhaust_tol)
    if not converged:
        raise NotConverged(f"exhaustion change {change:.3e} >= {10 * exhaust_tol:g}", history)
    return ExhaustionResult(sols[-1], history, sols, traces, converged)
