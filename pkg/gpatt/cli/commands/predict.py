"""``gpatt predict``: posterior mean and variance from a training report."""
import argparse
import logging
from pathlib import Path

import numpy as np

from gpatt.cli.commands.spectrum import load_report
from gpatt.cli.common import RunContext
from gpatt.core.errors import InputError
from gpatt.services.data_io import load_observations, save_grid, write_csv, write_json
from gpatt.services.evaluation import metric_report
from gpatt.services.inference import GridGP
from gpatt.services.kernels import family_kernel

logger = logging.getLogger(__name__)


def register(subparsers, output: argparse.ArgumentParser, training: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("predict", parents=[output, training],
                                   help="predict the full grid with learned hyperparameters")
    parser.add_argument("--input", type=Path, action="append", required=True, help="training grid data")
    parser.add_argument("--report", type=Path, required=True, help="train_report.json")
    parser.add_argument("--ground-truth", dest="ground_truth", type=Path, default=None,
                        help="complete grid of true values for scoring the missing nodes")


def run(ctx: RunContext) -> None:
    job = ctx.job
    if not job.inputs or job.report is None:
        raise InputError("predict needs --input and --report")
    obs = load_observations(job.inputs[0])
    report = load_report(job.report)
    if report.P != obs.grid.P:
        raise InputError(f"report is for {report.P}-dimensional data, input has {obs.grid.P} dimensions")
    mean_path = ctx.expect("mean.json")
    variance_path = ctx.expect("variance.csv")
    metrics_path = ctx.expect("metrics.json") if job.ground_truth is not None else None

    model = GridGP(family_kernel(report.family, report.P, report.A), obs,
                   job.train.pcg_tol, job.train.pcg_max_iter)
    test = np.flatnonzero(~obs.mask)
    prediction = model.predict(report.final_hypers, test, job.train.variance_budget, job.train.seed)
    save_grid(mean_path, obs, prediction.mean)
    write_csv(variance_path, [np.asarray(prediction.variance_indices), prediction.variance],
              ["index", "variance"])

    if metrics_path is not None:
        truth = load_observations(job.ground_truth)
        if truth.N != obs.N:
            raise InputError(f"ground truth has {truth.N} nodes, data has {obs.N}")
        if test.size == 0:
            raise InputError("the input has no missing nodes to score")
        write_json(metrics_path, metric_report(prediction, truth.values, test, obs.observed))
    logger.info(f"Predicted {obs.N} nodes, variance at {len(prediction.variance_indices)}")
