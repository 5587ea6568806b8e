"""
Hyperparameter learning by quasi-Newton ascent of the log marginal likelihood.

Each restart draws its own initialization from ``default_rng([seed, restart])``
and runs scipy's BFGS on the unconstrained (log-space) parameter vector; the
restart with the highest final value wins.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize, stats

from gpatt.core.errors import GPattError, InitializationError, TrainingError
from gpatt.core.logging import log_event
from gpatt.schemas.grid import Grid, ObservationSet
from gpatt.schemas.kernel import HyperParams
from gpatt.schemas.results import RestartSummary, TrainConfig, TrainReport
from gpatt.services.inference import GridGP
from gpatt.services.kernels import (
    RQKernel1D,
    ScaledKernel,
    SeparableKernel,
    SpectralMixture1D,
    family_kernel,
)

logger = logging.getLogger(__name__)

# Failures inside one objective evaluation that the line search should back off from.
_RECOVERABLE = (GPattError, ValueError, FloatingPointError, np.linalg.LinAlgError)


def _data_scale(y: ObservationSet) -> Tuple[float, float]:
    observed = y.observed
    std = float(np.std(observed))
    if not np.isfinite(std) or std <= 0:
        raise InitializationError("observed values have zero variance; nothing to fit")
    return std, std * std


def initialize(grid: Grid, y: ObservationSet, A: int, rng: np.random.Generator,
               range_scale: float = 1.0, sd_scale: float = 0.5) -> HyperParams:
    """Random SMP-A starting point.

    Frequencies are uniform up to each axis' Nyquist frequency; inverse spectral
    widths 1/sigma follow a positive truncated Gaussian centred on the axis range;
    weights are the P-th root of the data std divided by A.
    """
    if A < 1:
        raise InitializationError(f"need at least one component, got A={A}")
    std, var = _data_scale(y)
    P = grid.P
    kernel = SeparableKernel([SpectralMixture1D(A) for _ in range(P)], family="smp")
    weight_sq = (std ** (1.0 / P) / A) ** 2
    raw = []
    for p in range(P):
        nyquist = 0.5 / grid.spacing(p)
        mu = np.maximum(rng.uniform(0.0, nyquist, size=A), 1e-8)
        mean = grid.extent(p) * range_scale
        sd = grid.extent(p) * sd_scale
        inv_sigma = stats.truncnorm.rvs((0.0 - mean) / sd, np.inf, loc=mean, scale=sd,
                                        size=A, random_state=rng)
        inv_sigma = np.maximum(inv_sigma, 1e-12 * mean)
        block = np.column_stack([np.full(A, np.log(weight_sq)), np.log(mu), -2.0 * np.log(inv_sigma)])
        raw.append(block.ravel())
    return kernel.hypers(0.1 * var, np.concatenate(raw))


def initialize_smoother(kernel: SeparableKernel, y: ObservationSet,
                        rng: np.random.Generator) -> HyperParams:
    """Starting point for the SE / Matern / RQ comparison families.

    Length-scales start near a tenth of each axis range, jittered by up to a
    factor e^0.5 either way; the signal variance starts at the data variance.
    """
    _, var = _data_scale(y)
    grid = y.grid
    raw = []
    for p, k in enumerate(kernel.per_dim):
        base = k.base if isinstance(k, ScaledKernel) else k
        ell = 0.1 * grid.extent(p) * np.exp(rng.uniform(-0.5, 0.5))
        block = [np.log(ell)]
        if isinstance(base, RQKernel1D):
            block.append(0.0)
        if isinstance(k, ScaledKernel):
            block.insert(0, np.log(var))
        raw.extend(block)
    return kernel.hypers(0.1 * var, np.asarray(raw, dtype=float))


def initial_hypers(kernel: SeparableKernel, y: ObservationSet, config: TrainConfig,
                   rng: np.random.Generator) -> HyperParams:
    if kernel.family == "smp":
        return initialize(y.grid, y, config.A, rng, config.init_range_scale, config.init_sd_scale)
    return initialize_smoother(kernel, y, rng)


def optimize_hypers(model: GridGP, start: HyperParams, config: TrainConfig) -> Tuple[HyperParams, optimize.OptimizeResult, List[float]]:
    """BFGS on -LML from ``start``; returns the optimum, scipy's result and the accepted-step trace."""

    def objective(vector: np.ndarray) -> Tuple[float, np.ndarray]:
        try:
            with np.errstate(over="raise", invalid="raise"):
                ml, grad = model.evaluate(start.with_vector(vector))
        except _RECOVERABLE as exc:
            log_event(logger, "objective_failed", level=logging.WARNING, error=str(exc))
            return np.inf, np.zeros_like(vector)
        if not np.isfinite(ml.value) or not np.all(np.isfinite(grad)):
            return np.inf, np.zeros_like(vector)
        return -ml.value, -grad

    trace: List[float] = []

    def record(intermediate_result: optimize.OptimizeResult) -> None:
        trace.append(-float(intermediate_result.fun))
        log_event(logger, "optimizer_step", iteration=len(trace), lml=trace[-1])

    x0 = start.vector()
    value0, _ = objective(x0)
    if not np.isfinite(value0):
        raise TrainingError("objective is not finite at the starting point")
    trace.append(-value0)
    result = optimize.minimize(
        objective, x0, jac=True, method="BFGS", callback=record,
        options={"gtol": config.opt_tol, "maxiter": config.max_opt_iter, "norm": np.inf})
    return start.with_vector(result.x), result, trace


def _run_restart(kernel: SeparableKernel, y: ObservationSet, config: TrainConfig, restart: int):
    rng = np.random.default_rng([config.seed, restart])
    summary = RestartSummary(restart=restart)
    start = initial_hypers(kernel, y, config, rng)
    model = GridGP(kernel, y, tol=config.pcg_tol, max_iter=config.pcg_max_iter)
    try:
        final, result, trace = optimize_hypers(model, start, config)
    except _RECOVERABLE as exc:
        logger.warning(f"Restart {restart} failed: {exc}")
        return summary.model_copy(update={"error": str(exc)}), start, None, [], None
    if not np.isfinite(result.fun):
        return summary.model_copy(update={"error": "non-finite final value"}), start, None, trace, None
    summary = summary.model_copy(update={
        "final_lml": -float(result.fun), "iterations": int(result.nit), "converged": bool(result.success)})
    logger.info(f"Restart {restart}: lml={summary.final_lml:.6g} after {summary.iterations} iterations"
                f"{'' if summary.converged else ' (' + str(result.message) + ')'}")
    return summary, start, final, trace, float(np.max(np.abs(result.jac)))


def pruned_components(kernel: SeparableKernel, raw: np.ndarray, threshold: float) -> List[List[int]]:
    """Per dimension, the mixture components whose weight fell below threshold * max weight."""
    if kernel.family != "smp":
        return [[] for _ in range(kernel.P)]
    out = []
    for dim in kernel.spectral_mixture(raw).per_dim:
        w2 = np.array([c.weight_sq for c in dim.components])
        out.append(np.flatnonzero(w2 < threshold * w2.max()).tolist())
    return out


def train(y: ObservationSet, config: Optional[TrainConfig] = None,
          kernel: Optional[SeparableKernel] = None) -> TrainReport:
    """Fit hyperparameters by marginal likelihood with ``config.restarts`` restarts."""
    config = config or TrainConfig()
    kernel = kernel or family_kernel(config.family, y.grid.P, config.A)
    started = time.perf_counter()
    logger.info(f"Training {config.family} kernel (A={config.A}) on {y.M} of {y.N} grid points, "
                f"{config.restarts} restarts")

    def run(restart: int):
        return _run_restart(kernel, y, config, restart)

    if config.n_jobs > 1 and config.restarts > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            outcomes = list(pool.map(run, range(config.restarts)))
    else:
        outcomes = [run(r) for r in range(config.restarts)]

    finished = [o for o in outcomes if o[2] is not None]
    if not finished:
        raise TrainingError(f"all {config.restarts} restarts failed: "
                            + "; ".join(o[0].error or "unknown" for o in outcomes))
    best = max(finished, key=lambda o: o[0].final_lml)
    summary, start, final, trace, grad_max = best
    report = TrainReport(
        family=kernel.family,
        A=config.A if kernel.family == "smp" else 1,
        P=kernel.P,
        initial_hypers=start,
        final_hypers=final,
        final_lml=summary.final_lml,
        lml_trace=trace,
        pruned_components=pruned_components(kernel, final.raw, config.prune_threshold),
        restarts=[o[0] for o in outcomes],
        wallclock=time.perf_counter() - started,
        grad_max_norm=grad_max,
        spacings=[y.grid.spacing(p) for p in range(y.grid.P)],
    )
    logger.info(f"Best restart {summary.restart}: lml={report.final_lml:.6g}, "
                f"noise={final.noise_var:.3g}, {report.wallclock:.1f}s")
    return report
