import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from windbo.cases import build_case, case_circle, case_irregular, case_square
from windbo.layout import (Boundary, CapacityError, FarmLayout, Grid, LayoutError, load_boundary, snap_many,
                           snap_to_grid, split_vector, square_boundary)

D = 126.0


@pytest.fixture(scope="module")
def cases():
    return {"case1": case_square(), "case2": case_circle(), "case3": case_irregular()}


def test_case_capacities(cases):
    assert cases["case1"].grid.capacity == 324
    assert cases["case2"].grid.capacity == 256
    assert cases["case3"].grid.capacity == 406
    assert cases["case1"].rectangular and not cases["case2"].rectangular


def test_case_dimensions(cases):
    assert cases["case1"].dim == 32
    assert cases["case3"].dim == 50


def test_unknown_case_named():
    with pytest.raises(KeyError, match="case9"):
        build_case("case9")


@pytest.mark.parametrize("name", ["case1", "case2", "case3"])
def test_snap_is_idempotent_and_valid(cases, name):
    case = cases[name]
    space = case.design_space()
    X = np.random.default_rng(0).uniform(space.lower, space.upper, (50, case.dim))
    for x in X:
        layout = case.snap(x)
        layout.validate(case.boundary)
        assert np.array_equal(case.canonicalize(layout.vector()), layout.vector())


@pytest.mark.parametrize("name", ["case1", "case2", "case3"])
def test_snap_many_matches_rowwise(cases, name):
    case = cases[name]
    space = case.design_space()
    X = np.random.default_rng(1).uniform(space.lower, space.upper, (40, case.dim))
    X[:5, 1] = X[:5, 0]
    X[:5, case.n_turbines + 1] = X[:5, case.n_turbines]
    assert np.array_equal(case.canonicalize_many(X), np.vstack([case.canonicalize(x) for x in X]))


def test_collision_resolved_ring_then_angle():
    grid = Grid.from_boundary(square_boundary(5 * D), D)
    c = 2.5 * D
    layout = snap_to_grid([c, c, c, c, c, c], grid)
    assert layout.cells.tolist() == [[2, 2], [3, 2], [3, 3]]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-500, 1200), st.floats(-500, 1200)), min_size=1, max_size=25))
def test_snap_always_distinct_feasible_cells(points):
    grid = Grid.from_boundary(square_boundary(5 * D), D)
    xy = np.array(points)
    layout = snap_to_grid(np.concatenate([xy[:, 0], xy[:, 1]]), grid)
    layout.validate()
    assert len(np.unique(layout.cells, axis=0)) == len(points)


def test_point_inside_feasible_cell_keeps_that_cell():
    grid = Grid.from_boundary(square_boundary(5 * D), D)
    layout = snap_to_grid([1.1 * D, 3.9 * D], grid)
    assert layout.cells.tolist() == [[1, 3]]
    assert np.allclose(layout.xy, [[1.5 * D, 3.5 * D]])


def test_capacity_error():
    grid = Grid.from_boundary(square_boundary(2 * D), D)
    with pytest.raises(CapacityError):
        snap_to_grid(np.zeros(10), grid)
    with pytest.raises(CapacityError):
        snap_many(np.zeros((2, 10)), grid)


def test_odd_vector_rejected():
    with pytest.raises(LayoutError):
        split_vector([1.0, 2.0, 3.0])


def test_validate_flags_shared_cell():
    grid = Grid.from_boundary(square_boundary(3 * D), D)
    layout = FarmLayout.from_positions([[10.0, 10.0], [20.0, 20.0]], grid)
    with pytest.raises(LayoutError, match="share"):
        layout.validate()


def test_boundary_needs_three_vertices():
    with pytest.raises(LayoutError):
        Boundary(np.array([[0.0, 0.0], [1.0, 1.0]]))


def test_circle_violation_is_distance_outside(cases):
    case = cases["case2"]
    space = case.design_space()
    n = case.n_turbines
    inside = case.random_layouts(1, seed=0)[0]
    assert space.violations(inside[None, :])[0] == 0.0
    out = inside.copy()
    out[0] = -100.0
    out[n] = case.grid.extent()[1][1] / 2
    assert space.violations(out[None, :])[0] == pytest.approx(100.0, rel=1e-3)


def test_random_layouts_valid(cases):
    case = cases["case3"]
    for v in case.random_layouts(5, seed=3):
        case.snap(v).validate(case.boundary)
        assert np.array_equal(case.canonicalize(v), v)


def test_batch_aep_matches_single(cases):
    case = cases["case1"]
    V = case.random_layouts(4, seed=0)
    assert np.allclose(case.aep_gwh_batch(V), [case.aep_gwh(v) for v in V], rtol=1e-13, atol=0)


def test_vertex_file_with_header(tmp_path):
    p = tmp_path / "b.txt"
    p.write_text("x y\n0 0\n300 0\n300 300\n0 300\n")
    b = load_boundary(p)
    assert b.polygon.area == pytest.approx(90000.0)


def test_mask_file(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("mask 100 0 0\n110\n111\n")
    b = load_boundary(p)
    assert b.polygon.area == pytest.approx(50000.0)
    assert Grid.from_boundary(b, 100.0).capacity == 5


def test_bad_vertex_line(tmp_path):
    p = tmp_path / "b.txt"
    p.write_text("0 0\n1 0\nnope\n")
    with pytest.raises(LayoutError, match="line 3"):
        load_boundary(p)


def test_disconnected_mask_rejected(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("mask 100 0 0\n101\n")
    with pytest.raises(LayoutError):
        load_boundary(p)


def test_feasible_fraction_rectangle_is_one(cases):
    assert cases["case1"].feasible_fraction() == pytest.approx(1.0)
    assert 0.0 < cases["case2"].feasible_fraction() < 0.05
