"""``gpatt inpaint``: fill masked pixels of a grayscale or RGB raster.

Each channel is normalised, trained and predicted on its own; channels run
concurrently. Observed pixels are copied through unchanged.
"""
import argparse
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from gpatt.cli.commands.spectrum import write_spectrum
from gpatt.cli.common import RunContext
from gpatt.core.errors import InputError
from gpatt.schemas.results import MetricReport, TrainConfig
from gpatt.services.data_io import (
    channel_names,
    denormalize,
    normalize,
    parse_mask,
    read_raster,
    write_json,
    write_raster,
)
from gpatt.services.evaluation import metric_report
from gpatt.services.grid import as_array, observations_from_array
from gpatt.services.inference import GridGP
from gpatt.services.kernels import family_kernel
from gpatt.services.training import train

logger = logging.getLogger(__name__)


def register(subparsers, output: argparse.ArgumentParser, training: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("inpaint", parents=[output, training], help="fill holes in an image")
    parser.add_argument("--input", type=Path, action="append", required=True, help="PGM/PPM (or PNG) image")
    parser.add_argument("--mask", action="append", default=None,
                        help="rect:x0,y0,x1,y1 or a mask raster (0 = missing); repeat to combine")
    parser.add_argument("--ground-truth", dest="ground_truth", type=Path, default=None,
                        help="complete image for scoring the masked pixels")
    parser.add_argument("--baseline", action="store_true", default=None,
                        help="also run an SE-kernel model on the same job")


def inpaint_channel(values: np.ndarray, mask: np.ndarray, config: TrainConfig,
                    truth: Optional[np.ndarray] = None):
    """Train on the observed pixels of one channel and fill the rest.

    Returns the filled channel, the training report and (when ``truth`` is
    given and pixels are missing) metrics over the missing pixels.
    """
    scaled, mean, std = normalize(values, mask)
    obs = observations_from_array(scaled, mask)
    report = train(obs, config)
    model = GridGP(family_kernel(report.family, report.P, report.A), obs, config.pcg_tol, config.pcg_max_iter)
    test = np.flatnonzero(~obs.mask)
    prediction = model.predict(report.final_hypers, test if truth is not None else None,
                               config.variance_budget, config.seed)
    filled = np.where(mask, values, denormalize(as_array(prediction.mean, obs.grid), mean, std))
    metrics = None
    if truth is not None and test.size:
        target = ((truth - mean) / std).ravel(order="F")
        metrics = metric_report(prediction, target, test, obs.observed)
    return filled, report, metrics


def _run_model(ctx: RunContext, image: np.ndarray, mask: np.ndarray, truth: Optional[np.ndarray],
               config: TrainConfig, prefix: str) -> Dict[str, MetricReport]:
    names = channel_names(image)
    planes = [image] if image.ndim == 2 else [image[..., c] for c in range(3)]
    truths = [None] * len(planes) if truth is None else ([truth] if truth.ndim == 2 else [truth[..., c] for c in range(3)])
    suffix = ".pgm" if image.ndim == 2 else ".ppm"
    out_path = ctx.expect(f"{prefix}reconstruction{suffix}")
    report_paths = [ctx.expect(f"{prefix}train_report_{n}.json") for n in names]
    spectrum_paths = [ctx.expect(f"{prefix}spectrum_{n}.csv") for n in names]

    def work(c: int):
        return inpaint_channel(planes[c], mask, config, truths[c])

    with ThreadPoolExecutor(max_workers=len(planes)) as pool:
        futures = [pool.submit(work, c) for c in range(len(planes))]
        results = []
        failure = None
        for c, future in enumerate(futures):
            try:
                filled, report, metrics = future.result()
            except Exception as exc:
                failure = failure or exc
                continue
            write_json(report_paths[c], report)
            write_spectrum(spectrum_paths[c], report, ctx.job.n_freqs, ctx.job.max_freq)
            results.append((c, filled, metrics))
    if failure is not None:
        raise failure

    filled = [r[1] for r in sorted(results, key=lambda r: r[0])]
    write_raster(out_path, filled[0] if image.ndim == 2 else np.stack(filled, axis=-1))
    return {names[c]: m for c, _, m in results if m is not None}


def run(ctx: RunContext) -> None:
    job = ctx.job
    if not job.inputs:
        raise InputError("inpaint needs an --input image")
    image = read_raster(job.inputs[0])
    mask = parse_mask(job.mask, image.shape[:2])
    truth = None
    if job.ground_truth is not None:
        truth = read_raster(job.ground_truth)
        if truth.shape != image.shape:
            raise InputError(f"ground truth has shape {truth.shape}, image has {image.shape}")
    logger.info(f"Inpainting {image.shape} image: {int((~mask).sum())} of {mask.size} pixels missing")

    metrics_path = ctx.expect("metrics.json") if truth is not None else None
    metrics = {"gpatt": _run_model(ctx, image, mask, truth, job.train, "")}
    if job.baseline:
        baseline = job.train.model_copy(update={"family": "se"})
        metrics["se"] = _run_model(ctx, image, mask, truth, baseline, "se_")
    if metrics_path is not None:
        write_json(metrics_path, {model: {ch: m.model_dump() for ch, m in per.items()}
                                  for model, per in metrics.items()})
