"""``gpatt spectrum``: learned log spectra from a training report."""
import argparse
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gpatt.cli.common import RunContext
from gpatt.core.errors import InputError
from gpatt.schemas.results import TrainReport
from gpatt.services.data_io import write_csv
from gpatt.services.evaluation import kernel_spectrum
from gpatt.services.kernels import family_kernel


def register(subparsers, output: argparse.ArgumentParser, training: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("spectrum", parents=[output], help="export learned log spectra as CSV")
    parser.add_argument("--report", type=Path, required=True, help="train_report.json from a train run")
    parser.add_argument("--n-freqs", dest="n_freqs", type=int, default=None)
    parser.add_argument("--max-freq", dest="max_freq", type=float, default=None,
                        help="highest frequency (default: Nyquist of the training grid spacing)")


def load_report(path: Path) -> TrainReport:
    try:
        return TrainReport.model_validate_json(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read training report {path}: {exc}") from exc


def write_spectrum(path: Path, report: TrainReport, n_freqs: int, max_freq: Optional[float] = None) -> Path:
    """One CSV with a frequency column and a log spectrum column per dimension.

    Each dimension runs from 0 to ``max_freq``, or to the Nyquist frequency of
    the spacing recorded in the report.
    """
    kernel = family_kernel(report.family, report.P, report.A)
    max_freqs = nyquist(report.spacings or [1.0] * report.P, max_freq)
    columns, names = [], []
    for p, (k, raw) in enumerate(zip(kernel.per_dim, kernel.split(report.final_hypers.raw))):
        freqs = np.linspace(0.0, max_freqs[p], n_freqs)
        columns += [freqs, kernel_spectrum(k, raw, freqs)]
        names += [f"freq_{p}", f"log_spectrum_{p}"]
    return write_csv(path, columns, names)


def nyquist(spacings: Sequence[float], override: Optional[float]) -> list:
    return [override if override is not None else 0.5 / s for s in spacings]


def run(ctx: RunContext) -> None:
    job = ctx.job
    if job.report is None:
        raise InputError("spectrum needs --report")
    report = load_report(job.report)
    write_spectrum(ctx.expect("spectrum.csv"), report, job.n_freqs, job.max_freq)
