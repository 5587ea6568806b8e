"""
Runtime and accuracy stress suites on synthetic quasi-periodic textures.
"""
import logging
import time
from typing import Optional, Sequence, Tuple

import numpy as np

from gpatt.core.errors import InputError
from gpatt.core.logging import log_event
from gpatt.schemas.results import HolePoint, RuntimePoint, StressReport, TrainConfig
from gpatt.services.evaluation import metric_report
from gpatt.services.grid import observations_from_array
from gpatt.services.inference import GridGP, evaluate
from gpatt.services.kernels import family_kernel
from gpatt.services.synthetic import centered_hole, synthetic_texture
from gpatt.services.training import initial_hypers, train

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (1_000, 10_000, 100_000)
DEFAULT_HOLES = (0.1, 0.25, 0.4)


def loglog_slope(sizes: Sequence[float], seconds: Sequence[float]) -> float:
    """Least-squares slope of log(seconds) against log(N)."""
    return float(np.polyfit(np.log(sizes), np.log(seconds), 1)[0])


def runtime_suite(sizes: Sequence[int] = DEFAULT_SIZES, config: Optional[TrainConfig] = None,
                  hole: float = 0.1, repeats: int = 1) -> StressReport:
    """Time one log marginal likelihood + gradient evaluation per grid size (P = 2).

    Each size uses a near-square texture with a centred hole; the best of
    ``repeats`` timings is kept.
    """
    if not sizes or any(n < 4 for n in sizes):
        raise InputError(f"runtime sizes must be non-empty and each at least 4, got {list(sizes)}")
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    points = []
    for N in sizes:
        rows = int(round(np.sqrt(N)))
        shape = (rows, max(2, int(round(N / rows))))
        data = synthetic_texture(shape, rng)
        obs = observations_from_array(data, centered_hole(shape, hole))
        kernel = family_kernel(config.family, 2, config.A)
        hypers = initial_hypers(kernel, obs, config, rng)
        best, iterations = np.inf, 0
        for _ in range(repeats):
            started = time.perf_counter()
            _, _, solve = evaluate(kernel, hypers, obs, config.pcg_tol, config.pcg_max_iter)
            best = min(best, time.perf_counter() - started)
            iterations = solve.iterations
        points.append(RuntimePoint(N=obs.N, seconds=best, pcg_iterations=iterations))
        log_event(logger, "runtime_point", level=logging.INFO, N=obs.N, seconds=best, iterations=iterations)
    slope = loglog_slope([p.N for p in points], [p.seconds for p in points]) if len(points) > 1 else None
    return StressReport(suite="runtime", runtime=points, slope=slope)


def holesize_suite(holes: Sequence[float] = DEFAULT_HOLES, families: Sequence[str] = ("smp", "se"),
                   config: Optional[TrainConfig] = None, shape: Tuple[int, int] = (64, 64)) -> StressReport:
    """SMSE and MSLL against hole size for each kernel family.

    Every run is scored on the box of the largest hole, so smaller holes leave
    part of the test region observed and the ladder stays comparable.
    """
    if not holes or any(not 0.0 < h < 1.0 for h in holes):
        raise InputError(f"hole fractions must be non-empty and each in (0, 1), got {list(holes)}")
    if not families:
        raise InputError("holesize suite needs at least one kernel family")
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    truth = synthetic_texture(shape, rng)
    test_box = ~centered_hole(shape, max(holes))
    test_indices = np.flatnonzero(test_box.ravel(order="F"))
    rows = []
    for family in families:
        run_config = config.model_copy(update={"family": family})
        for fraction in sorted(holes):
            obs = observations_from_array(truth, centered_hole(shape, fraction))
            report = train(obs, run_config)
            model = GridGP(family_kernel(family, 2, run_config.A), obs, run_config.pcg_tol, run_config.pcg_max_iter)
            prediction = model.predict(report.final_hypers, test_indices, run_config.variance_budget, run_config.seed)
            metrics = metric_report(prediction, truth.ravel(order="F"), test_indices, obs.observed)
            rows.append(HolePoint(fraction=fraction, family=family, smse=metrics.smse, msll=metrics.msll))
            logger.info(f"{family} hole={fraction:.2f}: smse={metrics.smse:.4f} msll={metrics.msll:.4f}")
    return StressReport(suite="holesize", holes=rows)
