"""
Command-line entry point.

    gpatt inpaint --input img.ppm --mask rect:24,24,40,40 --kernel smp --A 30 --out dir/
    gpatt synth --kernel movie --grid 30x30x30 --seed 7 --out data/
    gpatt train --input data/train.json --A 8 --true-kernel data/kernel.json --out fit/
    gpatt stress --suite runtime
    gpatt --config job.json
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from gpatt.cli.commands import inpaint, predict, spectrum, stress, synth, train
from gpatt.cli.common import (
    EXIT_INVALID,
    execute,
    job_from_args,
    output_options,
    training_options,
    write_rejection_manifest,
)
from gpatt.core.config import settings
from gpatt.core.errors import GPattError
from gpatt.core.logging import configure_logging

logger = logging.getLogger(__name__)

COMMANDS = {
    "train": train,
    "predict": predict,
    "inpaint": inpaint,
    "synth": synth,
    "spectrum": spectrum,
    "stress": stress,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpatt", description=settings.app_name)
    parser.add_argument("--config", type=Path, default=None, help="job JSON file; replaces all other flags")
    parser.add_argument("--verbose", action="store_true", help="JSON-lines diagnostics on stderr")
    subparsers = parser.add_subparsers(dest="command")
    output, training = output_options(), training_options()
    for module in COMMANDS.values():
        module.register(subparsers, output, training)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(json_lines=True if args.verbose else None)
    if args.config is None and args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INVALID
    try:
        job = job_from_args(args)
    except (GPattError, ValidationError) as exc:
        logger.error(f"Invalid job: {exc}")
        if args.config is None:
            write_rejection_manifest(args, exc)
        return EXIT_INVALID
    return execute(job, COMMANDS[job.command].run)


if __name__ == "__main__":
    sys.exit(main())
