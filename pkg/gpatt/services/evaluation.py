"""
Prediction metrics, kernel-recovery comparison and spectrum export.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from gpatt.core.errors import MetricError, ShapeError
from gpatt.core.logging import log_event
from gpatt.schemas.kernel import SMKernel1D, SMPKernel
from gpatt.schemas.results import KernelSlice, MetricReport, PredictiveResult
from gpatt.services.kernels import Kernel1D, k_sm_1d, sm_spectral_density

logger = logging.getLogger(__name__)

LOG_FLOOR = np.log(1e-300)


def _as_pair(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"prediction has {a.size} entries, targets have {b.size}")
    if a.size == 0:
        raise MetricError("empty test set")
    return a, b


def smse(pred_mean, targets) -> float:
    """Mean squared error over the variance of the test targets."""
    pred_mean, targets = _as_pair(pred_mean, targets)
    var = float(np.var(targets))
    if var <= 0:
        raise MetricError("test targets have zero variance")
    return float(np.mean((pred_mean - targets) ** 2) / var)


def _gaussian_nll(x: np.ndarray, mean, var) -> np.ndarray:
    return 0.5 * np.log(2.0 * np.pi * var) + 0.5 * (x - mean) ** 2 / var


def msll(pred_mean, pred_var, targets, train_mean: float, train_var: float) -> float:
    """Mean negative log predictive density relative to N(train_mean, train_var). Lower is better."""
    pred_mean, targets = _as_pair(pred_mean, targets)
    pred_var = np.asarray(pred_var, dtype=float).ravel()
    if pred_var.shape != targets.shape:
        raise ShapeError(f"variance has {pred_var.size} entries, targets have {targets.size}")
    if np.any(pred_var <= 0) or not train_var > 0:
        raise MetricError("predictive and training variances must be positive")
    loss = _gaussian_nll(targets, pred_mean, pred_var) - _gaussian_nll(targets, train_mean, train_var)
    return float(np.mean(loss))


def metric_report(prediction: PredictiveResult, truth: np.ndarray, test_indices: Sequence[int],
                  train_values: np.ndarray) -> MetricReport:
    """SMSE over every test node; MSLL over the test nodes that carry a variance.

    The predictive variance used for MSLL includes the noise variance.
    """
    test_indices = np.asarray(test_indices, dtype=int)
    truth = np.asarray(truth, dtype=float).ravel()
    score = smse(prediction.mean[test_indices], truth[test_indices])

    lookup = {int(j): k for k, j in enumerate(prediction.variance_indices)}
    with_var = np.array([j for j in test_indices if int(j) in lookup], dtype=int)
    if with_var.size == 0:
        raise MetricError("no test node has a predictive variance")
    var = prediction.variance[[lookup[int(j)] for j in with_var]] + prediction.noise_var
    train_values = np.asarray(train_values, dtype=float)
    loss = msll(prediction.mean[with_var], var, truth[with_var],
                float(np.mean(train_values)), float(np.var(train_values)))
    report = MetricReport(smse=score, msll=loss, n_test=int(test_indices.size),
                          variance_subsampled=prediction.variance_subsampled
                          or with_var.size < test_indices.size)
    log_event(logger, "metric_report", level=logging.INFO, smse=report.smse, msll=report.msll,
              n_test=report.n_test, variance_points=int(with_var.size))
    return report


def _normalized(fn: Callable[[np.ndarray], np.ndarray], taus: np.ndarray) -> np.ndarray:
    k0 = float(np.asarray(fn(np.zeros(1)))[0])
    if k0 <= 0:
        raise MetricError("kernel has non-positive k(0)")
    return np.asarray(fn(taus), dtype=float) / k0


def kernel_recovery_compare(true_kernels: Sequence[Optional[Callable[[np.ndarray], np.ndarray]]],
                            learned: SMPKernel,
                            taus: Sequence[np.ndarray]) -> Tuple[List[KernelSlice], List[float]]:
    """Per dimension, k(tau)/k(0) for the ground truth and the learned SMP kernel.

    ``true_kernels`` entries are 1-D kernels (any callable of tau, e.g. a
    :class:`Kernel1D`); ``None`` records the learned curve alone. The
    discrepancy is the largest absolute gap between the normalised curves.
    """
    if not len(true_kernels) == len(taus) == learned.P:
        raise ShapeError("need one true kernel and one lag array per learned dimension")
    slices, discrepancies = [], []
    for p, (truth, lags, dim) in enumerate(zip(true_kernels, taus, learned.per_dim)):
        lags = np.asarray(lags, dtype=float)
        learned_values = _normalized(lambda t, d=dim: k_sm_1d(t, d), lags)
        true_values, gap = None, None
        if truth is not None:
            true_values = _normalized(truth, lags)
            gap = float(np.max(np.abs(learned_values - true_values)))
            discrepancies.append(gap)
        slices.append(KernelSlice(dimension=p, taus=lags, true_values=true_values,
                                  learned_values=learned_values, discrepancy=gap))
        log_event(logger, "kernel_recovery", dimension=p, discrepancy=gap)
    return slices, discrepancies


def export_spectrum(learned: SMKernel1D, freq_grid) -> np.ndarray:
    """log S(s) of a spectral mixture, floored at log(1e-300)."""
    density = sm_spectral_density(freq_grid, learned)
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(density), LOG_FLOOR)


def kernel_spectrum(kernel: Kernel1D, raw: np.ndarray, freq_grid) -> np.ndarray:
    """log spectrum of any trained 1-D kernel, analytic where a closed form exists."""
    density = np.asarray(kernel.spectral_density(freq_grid, raw), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.maximum(np.log(np.maximum(density, 0.0)), LOG_FLOOR)
