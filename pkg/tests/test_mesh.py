import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalarflat import build_grid, flat_ball, flat_exterior, graded_family, nested_grids
from scalarflat.errors import (CutOutOfRange, IncompatibleGrids, InvalidResolution,
                               UnsupportedModel)
from scalarflat.mesh import Field, field_from_csv, field_to_csv, geometric_nodes, restrict


def test_uniform_exterior_grid():
    grid = build_grid(flat_exterior(3, 1.0), 5, 2.0, q=1.0)
    np.testing.assert_array_equal(grid.r, [1.0, 1.25, 1.5, 1.75, 2.0])
    assert list(grid.radial_tags) == ["dM", "interior", "interior", "interior", "N"]


def test_punctured_grid_tags(flagship):
    grid = build_grid(flagship, 64, 2.0**-10)
    assert grid.r[0] == 2.0**-10 and grid.radial_tags[0] == "N"
    assert grid.r[-1] == 1.0 and grid.radial_tags[-1] == "dM"


def test_geometric_series_end():
    r = geometric_nodes(1.0, 50.0, 64, 1.1)
    h0 = r[1] - r[0]
    assert r[-1] == pytest.approx(1.0 + h0 * (1.1**63 - 1.0) / 0.1, rel=1e-12)
    np.testing.assert_allclose(np.diff(r)[1:] / np.diff(r)[:-1], 1.1, rtol=1e-9)


def test_default_stretch_is_log_uniform():
    grid = build_grid(flat_exterior(3), 101, 100.0)
    np.testing.assert_allclose(grid.r, np.geomspace(1.0, 100.0, 101), rtol=1e-12)


def test_compact_ball_grid():
    grid = build_grid(flat_ball(3), 9)
    assert grid.r[0] == 0.0 and grid.r[-1] == 1.0
    assert grid.cut_k is None and grid.radial_tags[-1] == "dM"


def test_invalid_grids(flagship):
    with pytest.raises(InvalidResolution):
        build_grid(flat_exterior(3), 3, 2.0)
    with pytest.raises(InvalidResolution):
        build_grid(flat_exterior(3), 16, 2.0, q=1.5)
    with pytest.raises(CutOutOfRange):
        build_grid(flat_exterior(3), 16, 0.5)
    with pytest.raises(CutOutOfRange):
        build_grid(flagship, 16, 2.0)
    with pytest.raises(CutOutOfRange):
        build_grid(flat_ball(3), 16, 0.5)
    with pytest.raises(UnsupportedModel):
        build_grid(flat_ball(3), 16, angular=8)
    with pytest.raises(UnsupportedModel):
        build_grid(flat_exterior(4), 16, 2.0, angular=8)


def test_polar_grid_layout(flagship):
    grid = build_grid(flagship, 16, 0.1, angular=9)
    assert grid.shape == (16, 9) and grid.size == 144
    assert grid.topology == "polar"
    np.testing.assert_allclose(grid.theta, np.linspace(0.0, np.pi, 9))
    # flat index k * M + j
    assert list(grid.boundary_index) == list(range(15 * 9, 16 * 9))
    assert list(grid.cut_index) == list(range(9))


def test_nested_pieces_share_nodes():
    pieces = nested_grids(flat_exterior(3), [10.0, 100.0, 1000.0], 301)
    for small, big in zip(pieces[:-1], pieces[1:]):
        np.testing.assert_array_equal(small.r, big.r[: small.r.size])
    assert pieces[0].cut_radius == pytest.approx(10.0, rel=0.05)


def test_graded_family_base_piece(flagship):
    master = graded_family(flagship, 1.0 / 16, 256, 2.0**-20)
    base = master.subgrid(1.0 / 16)
    assert base.size == 256 and base.cut_radius == 1.0 / 16
    assert master.r[0] <= 2.0**-20
    ratios = master.r[1:] / master.r[:-1]
    np.testing.assert_allclose(ratios, ratios[-1], rtol=1e-9)


def test_restrict_identity_and_linear():
    fine = build_grid(flat_exterior(3), 41, 5.0, q=1.0)
    coarse = build_grid(flat_exterior(3), 11, 4.0, q=1.05)
    u = Field(fine, fine.r.copy())
    assert restrict(u, fine, fine).values is not None
    np.testing.assert_array_equal(restrict(u, fine, fine).values, u.values)
    np.testing.assert_allclose(restrict(u, fine, coarse).values, coarse.r, rtol=1e-14)


def test_restrict_quadratic_error_bound():
    model = flat_exterior(3)
    fine = build_grid(model, 2049, 3.0, q=1.0)
    coarse = build_grid(model, 1025, 3.0, q=1.0)
    shifted = build_grid(model, 700, 2.9, q=1.0)
    u = Field(fine, fine.r**2)
    h = fine.r[1] - fine.r[0]
    assert np.max(np.abs(restrict(u, fine, coarse).values - coarse.r**2)) <= 1e-13
    # linear interpolation: h^2 max|u''| / 8 with u'' = 2
    assert np.max(np.abs(restrict(u, fine, shifted).values - shifted.r**2)) <= h * h / 4 * (1 + 1e-9)


def test_restrict_needs_containment():
    small = build_grid(flat_exterior(3), 11, 2.0)
    big = build_grid(flat_exterior(3), 11, 4.0)
    with pytest.raises(IncompatibleGrids):
        restrict(Field(small, np.ones(11)), small, big)


def test_csv_round_trip(tmp_path, flagship):
    grid = build_grid(flagship, 12, 0.2, angular=5)
    rng = np.random.default_rng(1)
    u = Field(grid, rng.uniform(0.5, 2.0, grid.size))
    path = tmp_path / "u.csv"
    field_to_csv(u, path)
    back = field_from_csv(path)
    assert back.grid.same_as(grid)
    np.testing.assert_array_equal(back.values, u.values)


def test_field_validates_size():
    grid = build_grid(flat_exterior(3), 8, 2.0)
    with pytest.raises(ValueError):
        Field(grid, np.ones(7))
    with pytest.raises(ValueError):
        Field(grid, np.full(8, np.nan))


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 1.2), st.integers(4, 300), st.floats(1.5, 1e3))
def test_geometric_nodes_properties(q, resolution, b):
    try:
        r = geometric_nodes(1.0, b, resolution, q)
    except InvalidResolution:
        # only a strong stretch over many nodes can collapse the first cells
        assert q ** (resolution - 1) > 1e12
        return
    assert r.size == resolution and r[0] == 1.0 and r[-1] == b
    assert np.all(np.diff(r) > 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(40, 200), st.floats(2.0, 50.0), st.floats(0.3, 0.9))
def test_subgrid_is_exact_sampling(resolution, cut, frac):
    grid = build_grid(flat_exterior(3), resolution, cut)
    inner_cut = 1.0 + frac * (cut - 1.0)
    piece = grid.subgrid(inner_cut)
    u = Field(grid, np.sin(grid.r))
    np.testing.assert_array_equal(restrict(u, grid, piece).values, np.sin(piece.r))
