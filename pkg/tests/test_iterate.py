import numpy as np
import pytest

from scalarflat import (build_barrier, build_grid, exhaust_solve, graded_family, iterate_step,
                        punctured_ball, select_epsilon_delta, select_gamma, solve_compact_piece)
from scalarflat.errors import MonotonicityViolated, NotConverged, PositivityLost
from scalarflat.iterate import IterationTrace
from scalarflat.mesh import Field

RHO = 1.0 / 16
CUTS = [RHO * 2.0**-j for j in range(16)]


@pytest.fixture(scope="module")
def setting():
    model = punctured_ball(3, 4 * np.pi, 1.0)
    master = graded_family(model, RHO, 512, CUTS[-1])
    barrier = build_barrier(model, CUTS, master=master)
    return model, master, barrier


def _const(grid, value):
    return Field(grid, np.full(grid.size, float(value)))


def test_gamma_examples(flagship):
    grid = build_grid(flagship, 16, 0.1, angular=5)
    assert select_gamma(0.0, 3.0, _const(grid, 0.3), 3) == 0.0
    assert select_gamma(1.0, 3.0, _const(grid, 0.1), 3) == pytest.approx(0.0165)
    assert select_gamma(np.cos, 3.0, _const(grid, 0.2), 3) == pytest.approx(0.066)
    with pytest.raises(ValueError):
        select_gamma(1.0, 1.0, _const(grid, 0.2), 3)


@pytest.mark.parametrize("beta", [1.5, 3.0, 5.0])
def test_constant_is_fixed_point(flagship, beta):
    grid = build_grid(flagship, 128, RHO, angular=9)
    one = _const(grid, 1.0)
    u = iterate_step(flagship, grid, one, float(flagship.boundary_h), beta, lam=1.0, gamma=0.3)
    assert np.max(np.abs(u.values - 1.0)) <= 1e-12


def test_step_from_super_solution_decreases(setting):
    model, master, barrier = setting
    grid = master.subgrid(RHO)
    pair = select_epsilon_delta(model, grid, barrier, 0.0, 3.0)
    u1 = iterate_step(model, grid, pair.u_plus, 0.0, 3.0)
    assert np.all(u1.values <= pair.u_plus.values + 1e-12)


def test_positivity_guard(flagship):
    grid = build_grid(flagship, 32, RHO)
    with pytest.raises(PositivityLost):
        iterate_step(flagship, grid, _const(grid, -1.0), 1.0, 3.0)


def test_fixed_point_start_converges_in_one_step(setting):
    model, master, barrier = setting
    grid = master.subgrid(RHO)
    h = float(model.boundary_h)
    pair = select_epsilon_delta(model, grid, barrier, h, 3.0)
    u, trace = solve_compact_piece(model, grid, pair, h, 3.0, u0=_const(grid, 1.0))
    assert trace.iterations == 1 and trace.converged
    assert np.max(np.abs(u.values - 1.0)) <= 1e-9


def test_f_zero_closed_form():
    # flat frame: w u = a (1/r + 1) has B_delta = 0 on the unit sphere
    model = punctured_ball(3, 4 * np.pi, 1.0)
    master = graded_family(model, RHO, 4096, CUTS[-1])
    barrier = build_barrier(model, CUTS, master=master)
    grid = master.subgrid(RHO)
    pair = select_epsilon_delta(model, grid, barrier, 0.0, 3.0)
    u, trace = solve_compact_piece(model, grid, pair, 0.0, 3.0, tol=1e-13, lam=1e-3)
    r = grid.r
    shape = (1.0 / r + 1.0) / model.w(r)
    a = u.values[grid.cut_k] / shape[grid.cut_k]
    assert np.max(np.abs(u.values - a * shape)) <= 1e-6
    assert trace.max_monotonicity <= 1e-10 and trace.max_bracket <= 1e-10


def test_trace_invariants_and_csv(setting, tmp_path):
    model, master, barrier = setting
    grid = master.subgrid(RHO)
    pair = select_epsilon_delta(model, grid, barrier, 1.0, 3.0)
    u, trace = solve_compact_piece(model, grid, pair, 1.0, 3.0, tol=1e-10, lam=1e-3)
    assert trace.converged and trace.sup_changes[-1] < 1e-10
    assert np.all(np.isfinite(trace.sup_changes))
    assert trace.max_monotonicity <= 1e-10 and trace.max_bracket <= 1e-10
    assert np.all(u.values >= pair.u_minus.values - 1e-10)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,sup_change,monotonicity,bracket"
    assert len(lines) == trace.iterations + 1

    # the limit is a fixed point of the step
    again = iterate_step(model, grid, u, 1.0, 3.0, lam=trace.lam, gamma=trace.gamma)
    assert np.max(np.abs(again.values - u.values)) <= 1e-10

    # doubling gamma leaves the limit unchanged
    u2, _ = solve_compact_piece(model, grid, pair, 1.0, 3.0, tol=1e-10, lam=1e-3,
                                gamma=2.0 * trace.gamma)
    assert np.max(np.abs(u2.values - u.values)) < 1e-9


def test_step_cap_raises_with_trace(setting):
    model, master, barrier = setting
    grid = master.subgrid(RHO)
    pair = select_epsilon_delta(model, grid, barrier, 1.0, 3.0)
    with pytest.raises(NotConverged) as info:
        solve_compact_piece(model, grid, pair, 1.0, 3.0, tol=1e-14, max_steps=3)
    assert isinstance(info.value.history, IterationTrace)
    assert info.value.history.iterations == 3


def test_start_below_bracket_is_rejected(setting):
    model, master, barrier = setting
    grid = master.subgrid(RHO)
    pair = select_epsilon_delta(model, grid, barrier, 1.0, 3.0)
    # a start below u_- increases towards the solution
    low = pair.u_minus.with_values(0.5 * pair.u_minus.values)
    with pytest.raises(MonotonicityViolated):
        solve_compact_piece(model, grid, pair, 1.0, 3.0, u0=low)


def test_exhaustion_fixed_point(setting):
    model, master, barrier = setting
    h = float(model.boundary_h)
    pieces = [master.subgrid(c) for c in CUTS[:3]]
    pair = select_epsilon_delta(model, pieces[-1], barrier, h, 3.0)
    result = exhaust_solve(model, pieces, pair, h, 3.0, u0=lambda g: _const(g, 1.0))
    assert all(d <= 1e-9 for _, d in result.history[1:])
    assert result.converged and result.solution.grid is pieces[-1]


def test_exhaustion_cauchy_and_bounds(setting):
    model, master, barrier = setting
    pieces = [master.subgrid(c) for c in CUTS[:5]]
    pair = select_epsilon_delta(model, pieces[-1], barrier, 1.0, 3.0)
    with pytest.raises(NotConverged) as info:
        exhaust_solve(model, pieces, pair, 1.0, 3.0, tol=1e-12, exhaust_tol=1e-12, lam=1e-6)
    diffs = [d for _, d in info.value.history[1:]]
    assert len(diffs) == 4 and all(b < a for a, b in zip(diffs, diffs[1:]))
    result = exhaust_solve(model, pieces, pair, 1.0, 3.0, tol=1e-12, exhaust_tol=1e-3, lam=1e-6)
    for u in result.pieces:
        assert u.min() >= pair.lower_bound - 1e-10 and u.max() <= pair.upper_bound + 1e-10


def test_exhaustion_needs_three_pieces(setting):
    model, master, barrier = setting
    pieces = [master.subgrid(c) for c in CUTS[:2]]
    pair = select_epsilon_delta(model, pieces[-1], barrier, 1.0, 3.0)
    with pytest.raises(ValueError):
        exhaust_solve(model, pieces, pair, 1.0, 3.0)
