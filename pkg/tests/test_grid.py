import numpy as np
import pytest
from pydantic import ValidationError

from gpatt.core.errors import BoundsError, DuplicatePointError, OffGridError
from gpatt.schemas.grid import Grid, ObservationSet
from gpatt.services.grid import (
    as_array,
    complete_grid,
    grid_points,
    linear_index,
    multi_index,
    observations_from_array,
)


def grid_3x4():
    return Grid(axes=[np.arange(3.0), np.arange(4.0)])


def test_linear_index_is_column_major():
    grid = grid_3x4()
    assert linear_index([0, 0], grid) == 0
    assert linear_index([2, 0], grid) == 2
    assert linear_index([2, 3], grid) == 11


def test_linear_index_bijection():
    grid = Grid(axes=[np.arange(3.0), np.arange(4.0), np.arange(2.0)])
    seen = set()
    for i in range(3):
        for j in range(4):
            for k in range(2):
                lin = linear_index([i, j, k], grid)
                assert multi_index(lin, grid) == [i, j, k]
                seen.add(lin)
    assert seen == set(range(grid.N))


def test_linear_index_out_of_range():
    with pytest.raises(BoundsError):
        linear_index([3, 0], grid_3x4())
    with pytest.raises(BoundsError):
        multi_index(12, grid_3x4())


def test_grid_rejects_bad_axes():
    with pytest.raises(ValidationError):
        Grid(axes=[np.array([0.0])])
    with pytest.raises(ValidationError):
        Grid(axes=[np.array([0.0, 2.0, 1.0])])
    with pytest.raises(ValidationError):
        Grid(axes=[])


def test_grid_points_follow_flattening():
    grid = grid_3x4()
    X = grid_points(grid)
    assert X.shape == (12, 2)
    np.testing.assert_array_equal(X[linear_index([2, 1], grid)], [2.0, 1.0])


def test_complete_grid_one_hole():
    obs = complete_grid([[0, 0], [1, 0], [0, 1]], [1.0, 2.0, 3.0])
    assert (obs.N, obs.M, obs.W) == (4, 3, 1)
    assert not obs.mask[linear_index([1, 1], obs.grid)]
    assert obs.values[linear_index([1, 1], obs.grid)] == 0.0


def test_complete_grid_full():
    pts = [[x, y] for x in range(3) for y in range(2)]
    obs = complete_grid(pts, np.arange(6.0))
    assert obs.W == 0
    assert obs.mask.all()


def test_complete_grid_subsample(rng):
    pts = np.array([[x, y] for x in range(10) for y in range(10)], dtype=float)
    keep = rng.permutation(100)[:60]
    targets = rng.standard_normal(60)
    obs = complete_grid(pts[keep], targets, axes=[np.arange(10.0), np.arange(10.0)])
    assert (obs.M, obs.W) == (60, 40)
    lin = [linear_index(p.astype(int), obs.grid) for p in pts[keep]]
    assert set(np.flatnonzero(obs.mask)) == set(lin)
    np.testing.assert_array_equal(obs.values[lin], targets)


def test_complete_grid_errors():
    with pytest.raises(DuplicatePointError):
        complete_grid([[0, 0], [0, 0], [1, 1]], [1.0, 2.0, 3.0])
    with pytest.raises(OffGridError):
        complete_grid([[0.5, 0.0]], [1.0], axes=[[0.0, 1.0], [0.0, 1.0]])


def test_imaginary_values_are_zeroed():
    grid = grid_3x4()
    mask = np.ones(12, dtype=bool)
    mask[5] = False
    obs = ObservationSet(grid=grid, values=np.full(12, 7.0), mask=mask)
    assert obs.values[5] == 0.0
    assert obs.M + obs.W == obs.N
    with pytest.raises(ValidationError):
        ObservationSet(grid=grid, values=np.zeros(12), mask=np.zeros(12, dtype=bool))


def test_header_round_trip(rng):
    grid = Grid(axes=[np.arange(4.0), np.array([0.0, 0.5, 2.0])])
    mask = rng.uniform(size=grid.N) > 0.4
    mask[0] = True
    obs = ObservationSet(grid=grid, values=rng.standard_normal(grid.N), mask=mask)
    header = obs.to_header()
    assert sum(header["mask"]["runs"]) == grid.N
    back = ObservationSet.from_header(header, obs.values)
    np.testing.assert_array_equal(back.mask, obs.mask)
    np.testing.assert_array_equal(back.grid.axes[1], grid.axes[1])


def test_observations_from_array_keeps_layout():
    values = np.arange(12.0).reshape(3, 4)
    obs = observations_from_array(values)
    assert obs.grid.shape == (3, 4)
    assert obs.values[linear_index([2, 1], obs.grid)] == values[2, 1]
    np.testing.assert_array_equal(as_array(obs.values, obs.grid), values)
