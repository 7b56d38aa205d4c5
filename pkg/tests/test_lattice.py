import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rholab.lattice import (
    Cube,
    CubeFamily,
    FamilyIndex,
    LatticeError,
    LatticeField,
    PrefixSums,
    average,
    dumps_field,
    dyadic_family,
    exhaustive_family,
    integral,
    loads_field,
    make_grid,
    measure,
    radius_ladder,
)


def test_cube_radius_is_half_diagonal():
    Q = Cube.from_corner([0.0, 0.0], 2.0)
    assert math.isclose(Q.radius, math.sqrt(2))
    assert math.isclose(Q.side, 2.0)
    assert np.allclose(Q.low, [0, 0]) and np.allclose(Q.high, [2, 2])


def test_cube_validation():
    with pytest.raises(LatticeError):
        Cube((0.0,), 0.0)
    with pytest.raises(LatticeError):
        Cube((0.0, 0.0, 0.0, 0.0), 1.0)
    with pytest.raises(LatticeError):
        Cube.from_edges([0, 0], [1, 2])


def test_half_open_membership():
    grid = make_grid([0.0], [1.0], 0.25)
    pts = grid.points().ravel()
    assert np.allclose(pts, [0, 0.25, 0.5, 0.75, 1.0])
    inner = grid.membership_mask(Cube.from_edges([0.25], [0.75])).ravel()
    # lower face open, upper face closed
    assert inner.tolist() == [False, False, True, True, False]
    # a lower face on the box boundary is closed
    edge = grid.membership_mask(Cube.from_edges([0.0], [0.5])).ravel()
    assert edge.tolist() == [True, True, True, False, False]


def test_adjacent_cubes_partition_points():
    grid = make_grid([0.0, 0.0], [1.0, 1.0], 0.125)
    masks = [grid.membership_mask(Q) for Q in dyadic_family(Cube.from_edges([0, 0], [1, 1]), 2)
             if math.isclose(Q.side, 0.25)]
    total = sum(m.astype(int) for m in masks)
    assert np.all(total == 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 2), st.integers(0, 10_000))
def test_prefix_sums_match_direct(dim, seed):
    rng = np.random.default_rng(seed)
    shape = (int(rng.integers(2, 12)),) * dim
    vals = rng.normal(size=shape)
    ps = PrefixSums(vals)
    lo = np.array([[rng.integers(0, s) for s in shape] for _ in range(5)])
    hi = np.array([[rng.integers(a, s) for a, s in zip(row, shape)] for row in lo])
    got = ps.box_sums(lo, hi)
    for k in range(5):
        sl = tuple(slice(a, b + 1) for a, b in zip(lo[k], hi[k]))
        assert math.isclose(got[k], vals[sl].sum(), rel_tol=1e-9, abs_tol=1e-9)


@pytest.mark.parametrize("dim,points", [(1, 64), (2, 16), (3, 6)])
def test_family_reduce_matches_loop(dim, points):
    rng = np.random.default_rng(dim)
    grid = make_grid([0.0] * dim, [1.0] * dim, 1.0 / points, offset=True)
    fam = exhaustive_family(grid)
    idx = FamilyIndex(grid, fam)
    vals = rng.normal(size=grid.shape)
    for how, fn in (("min", np.min), ("max", np.max)):
        got = idx.reduce(vals, how)
        for k in range(0, len(fam), max(1, len(fam) // 200)):
            assert got[k] == fn(vals[idx.slices(k)])


def test_exhaustive_family_covers_and_has_singletons():
    grid = make_grid([-1.0], [1.0], 0.1, offset=True)
    fam = exhaustive_family(grid)
    idx = FamilyIndex(grid, fam)
    radii = radius_ladder(grid)
    assert math.isclose(radii[0], grid.h / 2)
    singles = idx.counts[np.isclose(fam.radii, radii[0])]
    assert np.all(singles == 1)
    assert idx.nonempty.all()
    # the largest cube from any center reaches every point
    assert np.all(idx.counts[np.isclose(fam.radii, radii[-1])] == grid.size)


def test_dyadic_family_size():
    fam = dyadic_family(Cube.from_edges([0, 0], [1, 1]), 3)
    assert len(fam) == 1 + 4 + 16 + 64


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=4, max_size=4))
def test_field_text_round_trip(vals):
    grid = make_grid([0.0], [3.0], 1.0)
    f = LatticeField(grid, np.array(vals))
    g = loads_field(dumps_field(f))
    assert g.grid.same_as(f.grid)
    assert np.array_equal(g.samples, f.samples)


def test_loads_field_rejects_garbage():
    with pytest.raises(LatticeError):
        loads_field("not a field")


def test_average_measure_integral():
    f = LatticeField.from_function(lambda x: x[:, 0], [0.0], [1.0], 0.25, offset=True)
    assert math.isclose(integral(f), 0.5)
    R = Cube.from_edges([0.0], [1.0])
    assert math.isclose(average(f, R), 0.5)
    one = LatticeField.constant(f.grid, 1.0)
    assert math.isclose(measure(one, f.samples > 0.5), 0.5)
    with pytest.raises(LatticeError):
        average(f, R, LatticeField.constant(f.grid, 0.0))


def test_family_subset_inside():
    grid = make_grid([0.0], [1.0], 0.125)
    fam = exhaustive_family(grid)
    R = Cube.from_edges([0.0], [0.5])
    sub = fam.subset(fam.inside(R))
    assert all(R.contains_cube(Q) for Q in sub)
    with pytest.raises(LatticeError):
        CubeFamily.from_cubes([])
