"""``gpatt stress``: runtime and hole-size ladders."""
import argparse
import logging

from gpatt.cli.common import RunContext
from gpatt.core.errors import InputError
from gpatt.services.data_io import write_json, write_rows
from gpatt.services.stress import DEFAULT_HOLES, DEFAULT_SIZES, holesize_suite, runtime_suite

logger = logging.getLogger(__name__)

SMOOTHERS = ("se", "matern32", "rq")


def register(subparsers, output: argparse.ArgumentParser, training: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("stress", parents=[output, training], help="runtime and accuracy ladders")
    parser.add_argument("--suite", choices=("runtime", "holesize"), required=True)
    parser.add_argument("--sizes", type=int, nargs="+", default=None, help="grid sizes N for the runtime suite")
    parser.add_argument("--holes", type=float, nargs="+", default=None, help="hole fractions for the accuracy suite")
    parser.add_argument("--baseline", action="store_true", default=None,
                        help="run every smoothing family, not just SE")


def run(ctx: RunContext) -> None:
    job = ctx.job
    if job.suite is None:
        raise InputError("stress needs --suite")
    report_path = ctx.expect("stress.json")
    if job.suite == "runtime":
        table_path = ctx.expect("runtime.csv")
        report = runtime_suite(job.sizes or DEFAULT_SIZES, job.train)
        write_rows(table_path, report.runtime)
        logger.info(f"Runtime log-log slope: {report.slope}")
    else:
        table_path = ctx.expect("holesize.csv")
        families = tuple(dict.fromkeys((job.train.family,) + (SMOOTHERS if job.baseline else ("se",))))
        report = holesize_suite(job.holes or DEFAULT_HOLES, families, job.train)
        write_rows(table_path, report.holes)
    write_json(report_path, report)
