"""
Synthetic data: exact GP draws on grids, the three-factor movie kernel, and
quasi-periodic textures with rectangular holes.
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from gpatt.core.errors import ParameterError, ShapeError
from gpatt.core.logging import log_event
from gpatt.schemas.grid import Grid, ObservationSet
from gpatt.schemas.kernel import (
    KernelSpec,
    Matern32Node,
    PeriodicNode,
    ProductNode,
    RQNode,
    SENode,
    SumNode,
)
from gpatt.services.kernels import SeparableKernel, build_from_spec
from gpatt.services.kronecker import KroneckerOperator, apply_sqrt_full_grid, eigendecompose

logger = logging.getLogger(__name__)


def sample_grid_gp(kernel: SeparableKernel, grid: Grid, noise_var: float, rng: np.random.Generator,
                   raw: Optional[np.ndarray] = None) -> ObservationSet:
    """One draw from N(0, K + noise_var I) on the full grid, via Q V^(1/2) Q^T z."""
    if noise_var < 0:
        raise ParameterError(f"noise variance must be non-negative, got {noise_var!r}")
    if kernel.P != grid.P:
        raise ShapeError(f"kernel has {kernel.P} dimensions, grid has {grid.P}")
    raw = kernel.default_raw if raw is None else raw
    eig = eigendecompose(KroneckerOperator.for_grid(kernel.grams(grid.axes, raw)))
    f = apply_sqrt_full_grid(eig, rng.standard_normal(grid.N))
    values = f + np.sqrt(noise_var) * rng.standard_normal(grid.N)
    log_event(logger, "sample_grid_gp", N=grid.N, noise_var=noise_var)
    return ObservationSet(grid=grid, values=values, mask=np.ones(grid.N, dtype=bool))


def movie_kernel(extents: Sequence[float]) -> KernelSpec:
    """Ground-truth kernel for the synthetic movie, one factor per axis.

    k1 = SE + SE x PER, k2 = MA x PER + MA x PER, k3 = (RQ + PER) x PER + SE,
    with every period at a fifth of the axis extent.
    """
    if len(extents) != 3:
        raise ShapeError(f"the movie kernel has three dimensions, got {len(extents)} extents")
    e1, e2, e3 = (float(e) for e in extents)
    k1 = SumNode(type="sum", children=[
        SENode(type="se", lengthscale=0.3 * e1, variance=0.5),
        ProductNode(type="product", children=[
            SENode(type="se", lengthscale=0.6 * e1, variance=0.5),
            PeriodicNode(type="periodic", omega=5.0 / e1, lengthscale=1.0),
        ]),
    ])
    k2 = SumNode(type="sum", children=[
        ProductNode(type="product", children=[
            Matern32Node(type="matern32", lengthscale=0.5 * e2, variance=0.6),
            PeriodicNode(type="periodic", omega=5.0 / e2, lengthscale=1.0),
        ]),
        ProductNode(type="product", children=[
            Matern32Node(type="matern32", lengthscale=0.25 * e2, variance=0.4),
            PeriodicNode(type="periodic", omega=5.0 / e2, lengthscale=0.7),
        ]),
    ])
    k3 = SumNode(type="sum", children=[
        ProductNode(type="product", children=[
            SumNode(type="sum", children=[
                RQNode(type="rq", lengthscale=0.2 * e3, alpha=2.0, variance=0.5),
                PeriodicNode(type="periodic", omega=5.0 / e3, lengthscale=1.2, variance=0.5),
            ]),
            PeriodicNode(type="periodic", omega=5.0 / e3, lengthscale=1.5),
        ]),
        SENode(type="se", lengthscale=0.4 * e3, variance=0.3),
    ])
    return KernelSpec(type="separable", dims=[k1, k2, k3])


def movie(shape: Tuple[int, int, int], noise_var: float, rng: np.random.Generator) -> Tuple[KernelSpec, ObservationSet]:
    """A draw from the movie kernel on a unit-spaced grid of the given shape."""
    grid = Grid(axes=[np.arange(n, dtype=float) for n in shape])
    spec = movie_kernel([grid.extent(p) for p in range(grid.P)])
    return spec, sample_grid_gp(build_from_spec(spec), grid, noise_var, rng)


def middle_slices_mask(grid: Grid, n_slices: int, axis: int = -1) -> np.ndarray:
    """Flattened mask that is False on ``n_slices`` consecutive middle slices of ``axis``."""
    axis = axis % grid.P
    n = grid.shape[axis]
    if not 1 <= n_slices < n:
        raise ShapeError(f"cannot hold out {n_slices} of {n} slices")
    start = (n - n_slices) // 2
    mask = np.ones(grid.shape, dtype=bool)
    index = [slice(None)] * grid.P
    index[axis] = slice(start, start + n_slices)
    mask[tuple(index)] = False
    return mask.ravel(order="F")


def synthetic_texture(shape: Tuple[int, int], rng: np.random.Generator, n_waves: int = 3,
                      period_range: Tuple[float, float] = (6.0, 16.0), noise_sd: float = 0.05) -> np.ndarray:
    """Quasi-periodic 2-D pattern: a few oriented plane waves under a slow amplitude envelope."""
    rows, cols = np.meshgrid(np.arange(shape[0], dtype=float), np.arange(shape[1], dtype=float), indexing="ij")
    image = np.zeros(shape)
    for _ in range(n_waves):
        theta = rng.uniform(0.0, np.pi)
        freq = 1.0 / rng.uniform(*period_range)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        image += np.cos(2.0 * np.pi * freq * (rows * np.cos(theta) + cols * np.sin(theta)) + phase)
    envelope = 1.0 + 0.3 * np.cos(2.0 * np.pi * rows / (2.0 * shape[0])) * np.cos(2.0 * np.pi * cols / (2.0 * shape[1]))
    return envelope * image + noise_sd * rng.standard_normal(shape)


def centered_hole(shape: Tuple[int, ...], fraction: float) -> np.ndarray:
    """Boolean array, False inside a centred box covering about ``fraction`` of the nodes."""
    if not 0.0 <= fraction < 1.0:
        raise ShapeError(f"hole fraction must be in [0, 1), got {fraction}")
    mask = np.ones(shape, dtype=bool)
    if fraction == 0.0:
        return mask
    side = fraction ** (1.0 / len(shape))
    index = []
    for n in shape:
        width = max(1, int(round(side * n)))
        start = (n - width) // 2
        index.append(slice(start, start + width))
    mask[tuple(index)] = False
    return mask
