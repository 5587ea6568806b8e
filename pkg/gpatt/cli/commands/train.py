"""``gpatt train``: fit a kernel to grid data and write the training report."""
import argparse
import logging
from pathlib import Path

import numpy as np

from gpatt.cli.commands.spectrum import write_spectrum
from gpatt.cli.common import RunContext, resolve_kernel
from gpatt.core.errors import InputError
from gpatt.schemas.grid import Grid
from gpatt.schemas.results import TrainReport
from gpatt.services.data_io import load_observations, write_json
from gpatt.services.evaluation import kernel_recovery_compare
from gpatt.services.kernels import build_from_spec, family_kernel
from gpatt.services.training import train

logger = logging.getLogger(__name__)


def register(subparsers, output: argparse.ArgumentParser, training: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("train", parents=[output, training],
                                   help="learn kernel hyperparameters from grid data")
    parser.add_argument("--input", type=Path, action="append", required=True,
                        help="grid file (.json), CSV of x_1..x_P,y rows, or a grayscale raster")
    parser.add_argument("--true-kernel", dest="ground_truth", type=Path, default=None,
                        help="kernel.json from synth; compares the learned kernel against it")


def recovery(report: TrainReport, true_spec_path: Path, grid: Grid) -> dict:
    """Normalised kernel slices, truth against learned, over lags up to half of each axis extent."""
    truth = build_from_spec(resolve_kernel(str(true_spec_path)), P=grid.P)
    learned = family_kernel(report.family, report.P, report.A)
    if learned.family != "smp":
        raise InputError("kernel recovery compares spectral mixture fits only")
    taus = [np.linspace(0.0, 0.5 * grid.extent(p), 50) for p in range(grid.P)]
    slices, gaps = kernel_recovery_compare(truth.per_dim, learned.spectral_mixture(report.final_hypers.raw), taus)
    return {"discrepancy": gaps, "slices": [s.model_dump() for s in slices]}


def run(ctx: RunContext) -> None:
    job = ctx.job
    if not job.inputs:
        raise InputError("train needs an --input")
    obs = load_observations(job.inputs[0])
    report_path = ctx.expect("train_report.json")
    spectrum_path = ctx.expect("spectrum.csv")
    recovery_path = ctx.expect("kernel_recovery.json") if job.ground_truth is not None else None

    report = train(obs, job.train)
    write_json(report_path, report)
    write_spectrum(spectrum_path, report, job.n_freqs, job.max_freq)
    if recovery_path is not None:
        write_json(recovery_path, recovery(report, job.ground_truth, obs.grid))
    logger.info(f"Wrote {report_path.name} (lml={report.final_lml:.6g})")
