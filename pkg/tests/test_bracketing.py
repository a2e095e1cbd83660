import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalarflat import (build_barrier, build_grid, check_subsolution, check_supersolution,
                        flat_ball, flat_exterior, graded_family, punctured_ball,
                        select_epsilon_delta)
from scalarflat.bracketing import barrier_on, boundary_values
from scalarflat.errors import BracketingFailed, GridMismatch, PositivityRequired
from scalarflat.mesh import Field

RHO = 1.0 / 16


@pytest.fixture(scope="module")
def setting():
    model = punctured_ball(3, 4 * np.pi, 1.0)
    cuts = [RHO * 2.0**-j for j in range(16)]
    master = graded_family(model, RHO, 1024, cuts[-1])
    barrier = build_barrier(model, cuts, master=master)
    return model, master.subgrid(RHO), barrier


def test_boundary_values_forms(flagship):
    polar = build_grid(flagship, 16, 0.1, angular=5)
    np.testing.assert_array_equal(boundary_values(polar, 2.0), np.full(5, 2.0))
    np.testing.assert_allclose(boundary_values(polar, np.cos), np.cos(polar.theta))
    radial = build_grid(flagship, 16, 0.1)
    assert boundary_values(radial, np.cos)[0] == 1.0
    with pytest.raises(GridMismatch):
        boundary_values(polar, np.ones(3))


def _ball_candidate(eps):
    # on the flat ball: v = 0.8 - 0.4 (r^2 - 1) has v = 0.8 and B v = -0.8 + 0.4 = -0.4 at r = 1
    ball = flat_ball(3)
    grid = build_grid(ball, 65)
    return ball, grid, Field(grid, eps * (0.8 - 0.4 * (grid.r**2 - 1.0)))


def test_sub_margin_closed_form():
    ball, grid, u = _ball_candidate(0.1)
    # B u = -0.04 exactly (quadratics are exact for the 3-node stencil)
    cert = check_subsolution(ball, grid, u, 1.0, 3.0)
    assert cert.boundary_margin == pytest.approx(0.04 + 0.5 * 0.08**3, rel=1e-12)
    cert = check_subsolution(ball, grid, u, -1.0, 3.0)
    assert cert.boundary_margin == pytest.approx(0.04 - 0.5 * 0.08**3, rel=1e-12)
    assert cert.interior_margin < 0 and not cert.certified


def test_f_zero_sub_margin_is_eps_B_margin(setting):
    model, grid, barrier = setting
    v = barrier_on(barrier, grid)
    eps = 0.01
    cert = check_subsolution(model, grid, v.with_values(eps * v.values), 0.0, 3.0)
    assert cert.boundary_margin == pytest.approx(eps * barrier.B_margin, rel=1e-9)
    assert cert.certified


@pytest.mark.parametrize("check", [check_subsolution, check_supersolution])
def test_equality_case(check, flagship):
    grid = build_grid(flagship, 128, RHO, angular=5)
    one = Field(grid, np.ones(grid.size))
    cert = check(flagship, grid, one, float(flagship.boundary_h), 3.0)
    # exact equality; the strict sign test is left to rounding
    assert cert.boundary_margin == pytest.approx(0.0, abs=1e-12)
    assert cert.interior_margin >= -1e-10


def test_doubled_constant_is_not_super(flagship):
    grid = build_grid(flagship, 128, RHO)
    h = float(flagship.boundary_h)
    cert = check_supersolution(flagship, grid, Field(grid, np.full(grid.size, 2.0)), h, 3.0)
    assert cert.boundary_margin == pytest.approx(0.5 * h * (2.0 - 8.0), rel=1e-9)
    assert not cert.certified


@pytest.mark.parametrize("f,eps,delta", [(1.0, 0.015625, 0.125),
                                         (1.0 / 27.0, 0.0625, 0.25),
                                         (0.0, 1.0, 1.0)])
def test_regression_brackets(setting, f, eps, delta):
    model, grid, barrier = setting
    pair = select_epsilon_delta(model, grid, barrier, f, 3.0)
    assert (pair.epsilon, pair.delta) == (eps, delta)
    assert pair.sub_margin >= 0 and pair.super_margin >= 0


def test_sign_changing_f_on_polar_piece(setting):
    model, _, barrier = setting
    polar = graded_family(model, RHO, 256, RHO, angular=33)
    pair = select_epsilon_delta(model, polar, barrier, np.cos, 3.0)
    assert pair.sub_margin >= 0 and pair.super_margin >= 0
    assert pair.u_minus.grid is polar


@settings(max_examples=20, deadline=None)
@given(st.floats(-4.0, 4.0), st.floats(1.2, 6.0))
def test_bracket_invariants(setting, f, beta):
    model, grid, barrier = setting
    pair = select_epsilon_delta(model, grid, barrier, f, beta)
    assert pair.epsilon <= pair.delta
    assert np.all(pair.u_minus.values <= pair.u_plus.values)
    assert pair.sub_margin >= 0 and pair.super_margin >= 0
    assert pair.u_minus.min() >= pair.lower_bound * (1 - 1e-12)
    assert pair.u_plus.max() <= pair.upper_bound * (1 + 1e-12)
    sub = check_subsolution(model, grid, pair.u_minus, f, beta)
    sup = check_supersolution(model, grid, pair.u_plus, f, beta)
    assert sub.certified and sup.certified


def test_bracket_guards(setting):
    model, grid, barrier = setting
    with pytest.raises(ValueError):
        select_epsilon_delta(model, grid, barrier, 1.0, 1.0)
    ext = flat_exterior(3)
    with pytest.raises(PositivityRequired):
        select_epsilon_delta(ext, build_grid(ext, 64, 4.0), barrier, 1.0, 3.0)
    from dataclasses import replace
    with pytest.raises(BracketingFailed):
        select_epsilon_delta(model, grid, replace(barrier, B_margin=-1.0), 1.0, 3.0)
