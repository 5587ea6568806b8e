"""
Linear/multi-index mapping and completion of incomplete grids.

Flattening is column-major (first axis fastest), which is the reshape
convention the Kronecker layer relies on.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from gpatt.core.errors import BoundsError, DuplicatePointError, OffGridError, ShapeError
from gpatt.core.logging import log_event
from gpatt.schemas.grid import Grid, ObservationSet

logger = logging.getLogger(__name__)


def linear_index(multi_index: Sequence[int], grid: Grid) -> int:
    multi_index = np.asarray(multi_index, dtype=np.int64)
    if multi_index.shape != (grid.P,):
        raise ShapeError(f"expected {grid.P} indices, got shape {multi_index.shape}")
    shape = np.asarray(grid.shape)
    if np.any(multi_index < 0) or np.any(multi_index >= shape):
        raise BoundsError(f"index {multi_index.tolist()} out of range for grid shape {grid.shape}")
    return int(np.ravel_multi_index(tuple(multi_index), grid.shape, order="F"))


def multi_index(linear: int, grid: Grid) -> list:
    if not 0 <= linear < grid.N:
        raise BoundsError(f"linear index {linear} out of range for N={grid.N}")
    return [int(i) for i in np.unravel_index(linear, grid.shape, order="F")]


def grid_points(grid: Grid) -> np.ndarray:
    """N x P coordinates in flattening order."""
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    return np.stack([m.ravel(order="F") for m in mesh], axis=1)


def _axis_positions(coords: np.ndarray, axis: np.ndarray, p: int) -> np.ndarray:
    pos = np.clip(np.searchsorted(axis, coords), 0, axis.size - 1)
    # accept the neighbour below when it is the closer match
    below = np.clip(pos - 1, 0, axis.size - 1)
    pos = np.where(np.abs(axis[below] - coords) < np.abs(axis[pos] - coords), below, pos)
    scale = max(np.max(np.abs(axis)), 1.0)
    off = np.abs(axis[pos] - coords) > 1e-9 * scale
    if np.any(off):
        bad = coords[np.argmax(off)]
        raise OffGridError(f"coordinate {bad!r} is not on axis {p}")
    return pos


def complete_grid(points, targets, axes: Optional[Sequence[Sequence[float]]] = None) -> ObservationSet:
    """Pad scattered grid-node observations with imaginary points.

    Axes default to the sorted unique coordinates per dimension; pass ``axes``
    to densify the grid beyond what was observed.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    if points.shape[0] != targets.size:
        raise ShapeError(f"{points.shape[0]} points but {targets.size} targets")
    if points.shape[0] == 0:
        raise ShapeError("no observations supplied")

    if axes is None:
        axes = [np.unique(points[:, p]) for p in range(points.shape[1])]
    grid = Grid(axes=axes)
    if points.shape[1] != grid.P:
        raise ShapeError(f"points have {points.shape[1]} coordinates, grid has {grid.P} axes")

    idx = tuple(_axis_positions(points[:, p], grid.axes[p], p) for p in range(grid.P))
    lin = np.ravel_multi_index(idx, grid.shape, order="F")
    uniq, counts = np.unique(lin, return_counts=True)
    if np.any(counts > 1):
        dup = uniq[np.argmax(counts > 1)]
        raise DuplicatePointError(f"duplicate observation at grid node {multi_index(int(dup), grid)}")

    values = np.zeros(grid.N)
    mask = np.zeros(grid.N, dtype=bool)
    values[lin] = targets
    mask[lin] = True
    obs = ObservationSet(grid=grid, values=values, mask=mask)
    log_event(logger, "complete_grid", N=obs.N, M=obs.M, W=obs.W, ratio=obs.M / obs.N)
    return obs


def observations_from_array(values: np.ndarray, mask: Optional[np.ndarray] = None,
                            axes: Optional[Sequence[Sequence[float]]] = None) -> ObservationSet:
    """Lift an n_1 x ... x n_P array (e.g. one image channel) onto a grid.

    Array axis p becomes grid axis p; the default coordinates are 0..n_p-1.
    """
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match values shape {values.shape}")
    if axes is None:
        axes = [np.arange(n, dtype=float) for n in values.shape]
    grid = Grid(axes=axes)
    if grid.shape != values.shape:
        raise ShapeError(f"axes describe shape {grid.shape}, values have {values.shape}")
    return ObservationSet(grid=grid, values=values.ravel(order="F"), mask=mask.ravel(order="F"))


def as_array(flat: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of the flattening: a length-N vector back to grid shape."""
    return np.asarray(flat).reshape(grid.shape, order="F")
