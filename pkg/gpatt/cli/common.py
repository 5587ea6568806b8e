"""
Pieces shared by every subcommand: option groups, Job construction, the run
context that tracks requested artifacts, and the manifest.
"""
import argparse
import logging
import time
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

import gpatt
from gpatt.core.config import settings
from gpatt.core.errors import GPattError, InputError
from gpatt.schemas.job import Job, RunManifest
from gpatt.schemas.kernel import FAMILIES, KernelSpec
from gpatt.schemas.results import TrainConfig
from gpatt.services.data_io import hash_inputs, write_json

logger = logging.getLogger(__name__)

PACKAGES = ("numpy", "scipy", "pydantic", "pydantic-settings", "Pillow")

TRAINING_COMMANDS = ("train", "predict", "inpaint", "stress")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_INTERNAL = 3

# Argument name -> TrainConfig field, for flags that override training defaults.
TRAIN_FLAGS = {
    "A": "A",
    "restarts": "restarts",
    "max_opt_iter": "max_opt_iter",
    "opt_tol": "opt_tol",
    "seed": "seed",
    "pcg_tol": "pcg_tol",
    "pcg_max_iter": "pcg_max_iter",
    "variance_budget": "variance_budget",
    "n_jobs": "n_jobs",
}


def output_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parent.add_argument("--seed", type=int, default=None, help="random seed")
    return parent


def training_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("training")
    group.add_argument("--kernel", default=None,
                       help=f"kernel family ({', '.join(FAMILIES)}) or a kernel JSON file")
    group.add_argument("--A", type=int, default=None, help="spectral mixture components per dimension")
    group.add_argument("--restarts", type=int, default=None)
    group.add_argument("--max-opt-iter", dest="max_opt_iter", type=int, default=None)
    group.add_argument("--opt-tol", dest="opt_tol", type=float, default=None)
    group.add_argument("--pcg-tol", dest="pcg_tol", type=float, default=None)
    group.add_argument("--pcg-max-iter", dest="pcg_max_iter", type=int, default=None)
    group.add_argument("--variance-budget", dest="variance_budget", type=int, default=None)
    group.add_argument("--n-jobs", dest="n_jobs", type=int, default=None)
    return parent


def resolve_kernel(kernel: str) -> KernelSpec:
    """Load a kernel JSON file."""
    path = Path(kernel)
    if not path.is_file():
        raise InputError(f"kernel {kernel!r} is neither a family name nor a file")
    return KernelSpec.model_validate_json(path.read_text())


def train_config_from_args(args: argparse.Namespace) -> TrainConfig:
    """Training flags only; a kernel file is read later, by :func:`resolve_training`."""
    fields = {field: getattr(args, flag) for flag, field in TRAIN_FLAGS.items()
              if getattr(args, flag, None) is not None}
    if getattr(args, "kernel", None) in FAMILIES:
        fields["family"] = args.kernel
    return TrainConfig(**fields)


def resolve_training(job: Job) -> Job:
    """Fold ``job.kernel`` into the training config of commands that train.

    A family name sets the family; a kernel file must describe a trainable
    family, whose ``A`` applies unless ``--A`` was given.
    """
    if job.command not in TRAINING_COMMANDS or job.kernel is None:
        return job
    if job.kernel in FAMILIES:
        update = {"family": job.kernel}
    else:
        spec = resolve_kernel(job.kernel)
        if not spec.is_family:
            raise InputError(f"{job.command} learns a kernel family ({', '.join(FAMILIES)}); "
                             f"{job.kernel} describes a fixed {spec.type!r} kernel")
        update = {"family": spec.type}
        if spec.A is not None and "A" not in job.train.model_fields_set:
            update["A"] = spec.A
    return job.model_copy(update={"train": job.train.model_copy(update=update)})


def job_from_args(args: argparse.Namespace) -> Job:
    """Build a Job from parsed flags; ``--config`` replaces the flags entirely."""
    if getattr(args, "config", None) is not None:
        try:
            return Job.model_validate_json(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read job file {args.config}: {exc}") from exc
    inputs = list(getattr(args, "input", None) or [])
    fields = {
        "command": args.command,
        "inputs": inputs,
        "mask": list(getattr(args, "mask", None) or []),
        "kernel": getattr(args, "kernel", None),
        "train": train_config_from_args(args),
        "out": args.out,
    }
    for name in ("ground_truth", "report", "grid", "noise_var", "suite", "sizes", "holes",
                 "n_freqs", "max_freq", "baseline"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    return Job(**fields)


def package_versions() -> Dict[str, Optional[str]]:
    versions = {"gpatt": gpatt.__version__}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


class RunContext:
    """Output directory plus the list of artifacts a command promised to write."""

    def __init__(self, job: Job):
        self.job = job
        self.out = Path(job.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.requested: List[Path] = []

    def expect(self, name: str) -> Path:
        path = self.out / name
        if path not in self.requested:
            self.requested.append(path)
        return path

    def missing(self) -> List[Path]:
        return [p for p in self.requested if not p.is_file()]

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.job.train.seed, stream])


Handler = Callable[[RunContext], None]


def exit_status(exc: BaseException) -> int:
    if isinstance(exc, (InputError, ValidationError)):
        return EXIT_INVALID
    if isinstance(exc, GPattError):
        return EXIT_FAILED
    return EXIT_INTERNAL


def execute(job: Job, handler: Handler) -> int:
    """Run a handler, write the manifest, and map the outcome to an exit code."""
    started = time.perf_counter()
    ctx = RunContext(job)
    status, error = EXIT_OK, None
    try:
        ctx.job = resolve_training(job)
        handler(ctx)
    except (GPattError, ValidationError) as exc:
        logger.error(f"{job.command} failed: {exc}")
        status, error = exit_status(exc), str(exc)
    except Exception as exc:
        logger.exception(f"{job.command} failed unexpectedly")
        status, error = EXIT_INTERNAL, f"{type(exc).__name__}: {exc}"
    missing = ctx.missing()
    if missing and status == EXIT_OK:
        logger.error(f"{len(missing)} requested artifacts were not written")
        status = EXIT_FAILED
    manifest = RunManifest(
        command=job.command,
        job=ctx.job,
        seed=ctx.job.train.seed,
        versions=package_versions(),
        input_hashes=hash_inputs([*job.inputs, *(p for p in (job.ground_truth, job.report) if p)]),
        artifacts=[p.name for p in ctx.requested if p.is_file()],
        missing=[p.name for p in missing],
        status=status,
        error=error,
        wallclock=time.perf_counter() - started,
    )
    write_json(ctx.out / "manifest.json", manifest)
    logger.info(f"{job.command} finished with status {status}; artifacts in {ctx.out}")
    return status


def write_rejection_manifest(args: argparse.Namespace, exc: BaseException) -> Optional[Path]:
    """Manifest for flags that never formed a valid Job; None when no output directory was named."""
    out = getattr(args, "out", None)
    if out is None:
        return None
    Path(out).mkdir(parents=True, exist_ok=True)
    seed = getattr(args, "seed", None)
    manifest = RunManifest(
        command=str(args.command),
        seed=settings.seed if seed is None else seed,
        versions=package_versions(),
        input_hashes=hash_inputs(list(getattr(args, "input", None) or [])),
        status=exit_status(exc),
        error=str(exc),
    )
    return write_json(Path(out) / "manifest.json", manifest)
