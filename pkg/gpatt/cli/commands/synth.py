"""``gpatt synth``: exact GP draws on a grid from a fixed kernel."""
import argparse
import logging
import re

import numpy as np

from gpatt.cli.common import RunContext, resolve_kernel
from gpatt.core.errors import InputError
from gpatt.schemas.grid import Grid, ObservationSet
from gpatt.services.data_io import save_grid, write_json
from gpatt.services.kernels import build_from_spec
from gpatt.services.synthetic import middle_slices_mask, movie_kernel, sample_grid_gp

logger = logging.getLogger(__name__)

_MIDDLE = re.compile(r"^middle:(\d+)$")


def register(subparsers, output: argparse.ArgumentParser, training: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("synth", parents=[output], help="sample synthetic grid data")
    parser.add_argument("--kernel", required=True,
                        help="'movie' or a JSON file describing a separable kernel")
    parser.add_argument("--grid", required=True, help="grid shape, e.g. 30x30x30 (unit spacing)")
    parser.add_argument("--noise-var", dest="noise_var", type=float, default=None)
    parser.add_argument("--mask", action="append", default=None,
                        help="middle:K also writes a training grid with K middle slices of the last axis held out")


def parse_shape(text: str) -> tuple:
    try:
        shape = tuple(int(n) for n in text.lower().split("x"))
    except ValueError:
        raise InputError(f"bad grid shape {text!r}") from None
    if not shape or any(n < 2 for n in shape):
        raise InputError(f"every grid axis needs at least 2 nodes, got {text!r}")
    return shape


def run(ctx: RunContext) -> None:
    job = ctx.job
    if job.grid is None or job.kernel is None:
        raise InputError("synth needs --grid and --kernel")
    grid = Grid(axes=[np.arange(n, dtype=float) for n in parse_shape(job.grid)])
    if job.kernel == "movie":
        spec = movie_kernel([grid.extent(p) for p in range(grid.P)])
    else:
        spec = resolve_kernel(job.kernel)
        if spec.type != "separable":
            raise InputError("synth needs a kernel with recorded parameters ('separable' or 'movie')")
    holdouts = [_MIDDLE.match(m) for m in job.mask]
    if not all(holdouts):
        raise InputError(f"synth only understands middle:K masks, got {job.mask}")

    data_path = ctx.expect("data.json")
    kernel_path = ctx.expect("kernel.json")
    train_path = ctx.expect("train.json") if holdouts else None

    full = sample_grid_gp(build_from_spec(spec, P=grid.P), grid, job.noise_var, ctx.rng())
    save_grid(data_path, full)
    write_json(kernel_path, spec)
    if train_path is not None:
        mask = np.ones(grid.N, dtype=bool)
        for match in holdouts:
            mask &= middle_slices_mask(grid, int(match.group(1)))
        save_grid(train_path, ObservationSet(grid=grid, values=full.values, mask=mask))
    logger.info(f"Sampled {grid.N} values on a {job.grid} grid")
