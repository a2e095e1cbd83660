import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalarflat import (build_grid, classify_end, conformal_mean_curvature,
                        conformal_scalar_curvature, flat_ball, flat_exterior, punctured_ball)
from scalarflat.errors import (GridMismatch, InsufficientSamples, NonMonotoneVolume,
                               NonPositiveConformalFactor)
from scalarflat.geometry import (EndGrowth, check_punctured, conformal_laplacian,
                                 critical_exponent, end_growth, flat_frame_transfer,
                                 fundamental_constant, power_growth)
from scalarflat.mesh import Field


def test_constants():
    assert fundamental_constant(3) == pytest.approx(1.0 / (4.0 * np.pi))
    assert critical_exponent(3) == 3.0 and critical_exponent(4) == 2.0


def test_flagship_weight(flagship):
    r = np.geomspace(1e-6, 1.0, 50)
    np.testing.assert_allclose(flagship.w(r), 1.0 / r + 2.0, rtol=1e-14)
    assert flagship.boundary_h == pytest.approx(1.0 / 27.0, rel=1e-14)
    assert flagship.is_positive
    check_punctured(flagship)


def test_mean_curvature_convention():
    assert flat_ball(3).boundary_h == 1.0
    assert flat_exterior(3).boundary_h == -1.0
    assert not flat_exterior(3).is_positive


@pytest.mark.parametrize("model", [flat_exterior(3), flat_ball(3), punctured_ball(3, 4 * np.pi, 1.0),
                                   punctured_ball(4, 2.0, 0.5)])
def test_identity_change_is_flat(model):
    cut = None if model.compact else (4.0 if model.kind == "flat_exterior" else 0.1)
    grid = build_grid(model, 65, cut)
    one = np.ones(grid.size)
    np.testing.assert_allclose(conformal_scalar_curvature(model, grid, one), 0.0, atol=1e-9)
    h = conformal_mean_curvature(model, grid, one)
    np.testing.assert_allclose(h, model.boundary_h, rtol=1e-12)


def test_constant_two_on_exterior():
    model = flat_exterior(3)
    grid = build_grid(model, 33, 3.0, angular=9)
    np.testing.assert_allclose(conformal_scalar_curvature(model, grid, np.full(grid.size, 2.0)),
                               0.0, atol=1e-10)


def test_ball_scaled_by_two():
    ball = flat_ball(3)
    grid = build_grid(ball, 17)
    h = conformal_mean_curvature(ball, grid, np.full(grid.size, 2.0))
    np.testing.assert_allclose(h, 0.25, rtol=1e-14)


def test_flagship_identity_mean_curvature(flagship):
    grid = build_grid(flagship, 257, 1.0 / 16, angular=9)
    h = conformal_mean_curvature(flagship, grid, np.ones(grid.size), order=4)
    np.testing.assert_allclose(h, 1.0 / 27.0, rtol=1e-12)


def test_harmonic_inverse_r_second_order():
    # for 1/r on a uniform grid the h^2 terms of u_rr and 2 u_r / r cancel exactly
    model = flat_exterior(3)
    for res in (129, 257, 513):
        grid = build_grid(model, res, 4.0, q=1.0)
        h = grid.r[1] - grid.r[0]
        err = np.max(np.abs(conformal_scalar_curvature(model, grid, 1.0 / grid.r, 2)))
        assert err <= h * h


def test_harmonic_inverse_r_fourth_order():
    model = flat_exterior(3)
    errs = []
    for res in (65, 129, 257):
        grid = build_grid(model, res, 4.0, q=1.0)
        errs.append(np.max(np.abs(conformal_scalar_curvature(model, grid, 1.0 / grid.r, 4))))
    assert errs[0] / errs[1] >= 12.0 and errs[1] / errs[2] >= 12.0


def test_polar_harmonic_refinement():
    # r cos(theta) is flat harmonic; with w = 1 the conformal Laplacian is the flat one
    model = flat_exterior(3)
    errs = []
    for res, ang in ((33, 17), (65, 33), (129, 65)):
        grid = build_grid(model, res, 3.0, q=1.0, angular=ang)
        R, T = np.meshgrid(grid.r, grid.theta, indexing="ij")
        u = (R * np.cos(T)).reshape(-1) + 10.0
        errs.append(np.max(np.abs(conformal_laplacian(model, grid, u, order=2))))
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        conformal_scalar_curvature(flat_exterior(3), build_grid(flat_ball(3), 9), np.ones(9))
    grid = build_grid(flat_exterior(3), 9, 2.0)
    with pytest.raises(GridMismatch):
        conformal_scalar_curvature(flat_exterior(3), grid, np.ones(8))
    with pytest.raises(NonPositiveConformalFactor):
        conformal_scalar_curvature(flat_exterior(3), grid, -np.ones(9))


def test_transfer_examples(flagship):
    grid = build_grid(flagship, 33, 0.25)
    one = Field(grid, np.ones(grid.size))
    np.testing.assert_allclose(flat_frame_transfer(flagship, one, "to_flat").values,
                               1.0 / grid.r + 2.0, rtol=1e-15)
    ext = flat_exterior(3)
    g2 = build_grid(ext, 9, 2.0)
    u = Field(g2, np.linspace(1.0, 2.0, 9))
    np.testing.assert_array_equal(flat_frame_transfer(ext, u, "to_flat").values, u.values)
    with pytest.raises(ValueError):
        flat_frame_transfer(ext, u, "sideways")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=33, max_size=33))
def test_transfer_round_trip(values):
    model = punctured_ball(3, 4 * np.pi, 1.0)
    grid = build_grid(model, 33, 0.05)
    u = Field(grid, np.array(values))
    back = flat_frame_transfer(model, flat_frame_transfer(model, u, "to_flat"), "from_flat")
    np.testing.assert_allclose(back.values, u.values, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(3, 5))
def test_scalar_curvature_homogeneity(c, n):
    model = punctured_ball(n, 3.0, 1.0)
    grid = build_grid(model, 33, 0.1)
    u = 1.0 + 0.3 * np.sin(5 * grid.r)
    a = conformal_scalar_curvature(model, grid, c * u)
    b = conformal_scalar_curvature(model, grid, u)
    np.testing.assert_allclose(a, c ** (-4.0 / (n - 2)) * b, rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 20.0), st.integers(3, 6))
def test_mean_curvature_of_constants(kappa, n):
    model = punctured_ball(n, 2.0, 1.5)
    grid = build_grid(model, 17, 0.2)
    h = conformal_mean_curvature(model, grid, np.full(grid.size, kappa))
    np.testing.assert_allclose(h, kappa ** (-2.0 / (n - 2)) * model.boundary_h, rtol=1e-12)


def test_classify_power_growths():
    assert classify_end(power_growth(1.0))[0] is False
    assert classify_end(power_growth(2.0))[0] is False
    large, integral = classify_end(power_growth(2.5))
    assert large and integral == pytest.approx(2.0, rel=1e-2)
    large, integral = classify_end(power_growth(3.0))
    assert large and integral == pytest.approx(1.0, abs=0.01)


def test_classify_needs_samples():
    with pytest.raises(InsufficientSamples):
        classify_end(power_growth(3.0, t_max=10.0))
    with pytest.raises(InsufficientSamples):
        classify_end(power_growth(3.0, samples=5))
    with pytest.raises(NonMonotoneVolume):
        EndGrowth(np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.5, 2.0]), 3.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(2.05, 5.0), st.floats(1.0, 100.0))
def test_classify_monotone_in_volume(alpha, boost):
    small = power_growth(alpha)
    big = EndGrowth(small.t, small.V * boost, alpha)
    assert classify_end(small)[0] and classify_end(big)[0]
    assert classify_end(big)[1] <= classify_end(small)[1] * (1 + 1e-12)


def test_model_ends():
    large, integral = classify_end(end_growth(flat_exterior(3)))
    assert large and np.isfinite(integral)
    growth = end_growth(punctured_ball(3, 4 * np.pi, 1.0))
    assert growth.alpha == pytest.approx(3.0, abs=0.05)
    assert classify_end(growth)[0]
