"""
Exact GP inference on complete and incomplete grids.

Missing grid nodes are padded with imaginary observations of infinite noise.
Solves run preconditioned conjugate gradients on

    (C K C + I) z = C y,    C = diag(mask / sigma),    alpha = C z,

which is the infinite-noise limit taken exactly: rows and columns of the
imaginary slots decouple, and alpha restricted to the real slots solves
(K_M + sigma^2 I) alpha_M = y_M. Only the log-determinant on an incomplete grid
is approximated, by the M largest eigenvalues of K_N scaled by M/N.
"""
import itertools
import logging
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from gpatt.core.config import settings
from gpatt.core.errors import ConvergenceError, NumericalDegeneracyError, ShapeError
from gpatt.core.logging import log_event
from gpatt.schemas.grid import ObservationSet
from gpatt.schemas.kernel import HyperParams
from gpatt.schemas.results import MarginalLikelihood, NoiseModel, PosteriorSolve, PredictiveResult
from gpatt.services.kernels import SeparableKernel
from gpatt.services.kronecker import (
    EigenSystem,
    KroneckerOperator,
    apply_inverse_full_grid,
    eigendecompose,
    kron_column,
    kron_mvprod,
    log_det_terms,
    top_eigen_indices,
)

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


def covariance_operator(kernel: SeparableKernel, obs_or_axes, raw: np.ndarray) -> KroneckerOperator:
    """Prior covariance of a separable kernel on a grid."""
    axes = obs_or_axes.grid.axes if isinstance(obs_or_axes, ObservationSet) else obs_or_axes
    return KroneckerOperator.for_grid(kernel.grams(axes, raw))


def conjugate_gradients(matvec: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
                        x0: Optional[np.ndarray] = None, tol: float = 1e-6,
                        max_iter: int = 1000) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """CG on an N x k block of independent right-hand sides.

    Returns the solution, per-column iteration counts and the history of the
    worst relative residual. Columns stop updating once converged.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b, axis=0)
    safe = np.where(bnorm > 0, bnorm, 1.0)
    rs = np.sum(r * r, axis=0)
    res = np.where(bnorm > 0, np.sqrt(rs) / safe, 0.0)
    active = res > tol
    p = r.copy()
    iterations = np.zeros(b.shape[1], dtype=int)
    history = [float(res.max(initial=0.0))]

    while active.any():
        if iterations.max() >= max_iter:
            raise ConvergenceError(
                f"CG did not reach tol={tol:g} in {max_iter} iterations (residual {history[-1]:.3g})",
                residual_history=history)
        Ap = matvec(p)
        pAp = np.sum(p * Ap, axis=0)
        step = np.divide(rs, pAp, out=np.zeros_like(rs), where=active & (pAp > 0))
        x += step * p
        r -= step * Ap
        rs_new = np.sum(r * r, axis=0)
        beta = np.divide(rs_new, rs, out=np.zeros_like(rs), where=active & (rs > 0))
        p = np.where(active, r + beta * p, p)
        rs = np.where(active, rs_new, rs)
        iterations += active
        res = np.where(bnorm > 0, np.sqrt(rs) / safe, 0.0)
        active = res > tol
        history.append(float(res.max(initial=0.0)))
    return x, iterations, history


def _lifted_solve(K_op: KroneckerOperator, noise: NoiseModel, rhs: np.ndarray, tol: float,
                  max_iter: int, alpha0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    if rhs.shape[0] != K_op.N or noise.mask.shape != (K_op.N,):
        raise ShapeError(f"operator has N={K_op.N}, data has {rhs.shape[0]} rows")
    c = noise.preconditioner[:, None]

    def matvec(v):
        return c * kron_mvprod(K_op, c * v) + v

    z0 = None
    if alpha0 is not None:
        z0 = np.where(c > 0, alpha0.reshape(rhs.shape) * np.sqrt(noise.sigma_sq), 0.0)
    z, iterations, history = conjugate_gradients(matvec, c * rhs, z0, tol, max_iter)
    return c * z, iterations, history


def pcg_solve(K_op: KroneckerOperator, noise: NoiseModel, y: ObservationSet,
              tol: Optional[float] = None, max_iter: Optional[int] = None,
              alpha0: Optional[np.ndarray] = None, eig: Optional[EigenSystem] = None) -> PosteriorSolve:
    """alpha = (K_N + D_N)^-1 y, zero at imaginary slots.

    A complete grid skips CG: the eigen solve is exact and reports zero
    iterations.
    """
    tol = settings.pcg_tol if tol is None else tol
    max_iter = settings.pcg_max_iter if max_iter is None else max_iter
    if y.W == 0:
        eig = eigendecompose(K_op) if eig is None else eig
        alpha = apply_inverse_full_grid(eig, noise.sigma_sq, y.values)
        norm = float(np.linalg.norm(y.values))
        residual = kron_mvprod(K_op, alpha) + noise.sigma_sq * alpha - y.values
        final = float(np.linalg.norm(residual)) / norm if norm > 0 else 0.0
        log_event(logger, "pcg_solve", N=y.N, M=y.M, iterations=0, residual=final, eigen_solve=True)
        return PosteriorSolve(alpha=alpha, iterations=0, final_residual=final)
    alpha, iterations, history = _lifted_solve(
        K_op, noise, y.values[:, None], tol, max_iter,
        None if alpha0 is None else np.asarray(alpha0, dtype=float)[:, None])
    log_event(logger, "pcg_solve", N=y.N, M=y.M, iterations=int(iterations[0]), residual=history[-1])
    return PosteriorSolve(alpha=alpha[:, 0], iterations=int(iterations[0]), final_residual=history[-1])


def predict_mean(K_op: KroneckerOperator, solve: PosteriorSolve) -> np.ndarray:
    """Posterior mean K_N alpha at every grid node."""
    return kron_mvprod(K_op, solve.alpha)


def predict_variance(K_op: KroneckerOperator, noise: NoiseModel, test_indices: Sequence[int],
                     tol: Optional[float] = None, max_iter: Optional[int] = None,
                     batch: Optional[int] = None) -> np.ndarray:
    """Latent variance k(x,x) - k_*^T (K_M + sigma^2 I)^-1 k_* at grid nodes.

    One lifted solve per test point, batched into blocks of right-hand sides.
    """
    tol = settings.pcg_tol if tol is None else tol
    max_iter = settings.pcg_max_iter if max_iter is None else max_iter
    batch = settings.variance_batch if batch is None else batch
    test_indices = np.asarray(test_indices, dtype=int).ravel()
    out = np.empty(test_indices.size)
    mask = noise.mask[:, None]
    for start in range(0, test_indices.size, batch):
        idx = test_indices[start:start + batch]
        cols = np.stack([kron_column(K_op, int(j)) for j in idx], axis=1)
        alpha, iterations, _ = _lifted_solve(K_op, noise, np.where(mask, cols, 0.0), tol, max_iter)
        prior = cols[idx, np.arange(idx.size)]
        var = prior - np.sum(cols * alpha, axis=0)
        floor = -1e-8 * prior
        if np.any(var < floor):
            bad = int(np.argmin(var - floor))
            raise NumericalDegeneracyError(
                f"negative predictive variance {var[bad]:.3g} at node {int(idx[bad])}")
        out[start:start + idx.size] = np.clip(var, 0.0, prior)
        log_event(logger, "variance_batch", size=int(idx.size), max_iterations=int(iterations.max(initial=0)))
    return out


class _Complexity(NamedTuple):
    value: float
    clamped: int
    # Per-factor weights w_f[k] = sum over selected i with i_f = k of
    # d(value)/d(lambda_i) * prod_{g != f} V_g[i_g]; clamped lambda_i contribute 0.
    factor_weights: List[np.ndarray]
    # sum of 1 / (s lambda_i + sigma^2), the noise derivative term
    inverse_sum: float


def _complexity(eig: EigenSystem, noise_var: float, M: int, limit: Optional[int] = None) -> _Complexity:
    """Approximate log|K_M + s^2 I| from the M largest eigenvalues of K_N, s = M/N."""
    N = eig.N
    limit = settings.eigen_enumeration_limit if limit is None else limit
    if M == N:
        if N > limit:
            return _streamed_full_grid(eig, noise_var)
        value, clamped = log_det_terms(eig, noise_var, limit)
        raw_lam = eig.merged
        inverse = 1.0 / (eig.clean(raw_lam)[0] + noise_var)
        weights = np.where(raw_lam > 0, inverse, 0.0)
        return _Complexity(value, clamped, _eigen_weights(eig, np.arange(N), weights), float(np.sum(inverse)))
    scale = M / N
    idx = top_eigen_indices(eig, M, limit)
    raw_lam = eig.merged[idx] if N <= limit else _gather(eig, idx)
    lam, clamped = eig.clean(raw_lam)
    shifted = scale * lam + noise_var
    if np.any(shifted <= 0):
        raise NumericalDegeneracyError("scaled eigenvalue + noise variance is not positive")
    if clamped:
        log_event(logger, "eigen_clamp", level=logging.WARNING, clamped=clamped, N=N)
    inverse = 1.0 / shifted
    weights = np.where(raw_lam > 0, scale * inverse, 0.0)
    return _Complexity(float(np.sum(np.log(shifted))), clamped, _eigen_weights(eig, idx, weights),
                       float(np.sum(inverse)))


def _streamed_full_grid(eig: EigenSystem, noise_var: float) -> _Complexity:
    """The M = N complexity one lattice row at a time, never holding all N eigenvalues."""
    *lead, last = eig.V
    factor_weights = [np.zeros(n) for n in eig.sizes]
    total, clamped, inverse_sum = 0.0, 0, 0.0
    for pos in itertools.product(*(range(v.size) for v in lead)):
        lead_vals = np.array([v[i] for v, i in zip(lead, pos)])
        lead_prod = float(np.prod(lead_vals))
        raw_row = lead_prod * last
        lam, n_clamped = eig.clean(raw_row)
        shifted = lam + noise_var
        if np.any(shifted <= 0):
            raise NumericalDegeneracyError("lambda + noise variance is not positive")
        inverse = 1.0 / shifted
        weights = np.where(raw_row > 0, inverse, 0.0)
        total += float(np.sum(np.log(shifted)))
        clamped += n_clamped
        inverse_sum += float(np.sum(inverse))
        factor_weights[-1] += weights * lead_prod
        row = float(np.dot(weights, last))
        for f, i in enumerate(pos):
            factor_weights[f][i] += row * float(np.prod(np.delete(lead_vals, f)))
    if clamped:
        log_event(logger, "eigen_clamp", level=logging.WARNING, clamped=clamped, N=eig.N)
    return _Complexity(total, clamped, factor_weights, inverse_sum)


def _gather(eig: EigenSystem, idx: np.ndarray) -> np.ndarray:
    parts = eig.factor_indices(idx)
    out = np.ones(idx.size)
    for v, i in zip(eig.V, parts):
        out = out * v[i]
    return out


def _assemble(y: ObservationSet, solve: PosteriorSolve, complexity: float, clamped: int) -> MarginalLikelihood:
    fit = float(np.dot(y.values, solve.alpha))
    noise_const = 0.5 * y.M * LOG_2PI
    value = -0.5 * (fit + complexity) - noise_const
    return MarginalLikelihood(value=value, model_fit=fit, complexity=complexity,
                              noise_const=noise_const, clamped_eigenvalues=clamped)


def log_marginal_likelihood(K_op: KroneckerOperator, noise: NoiseModel, y: ObservationSet,
                            tol: Optional[float] = None, max_iter: Optional[int] = None,
                            eig: Optional[EigenSystem] = None,
                            check_limit: Optional[int] = None) -> MarginalLikelihood:
    """Approximate log marginal likelihood.

    On an incomplete grid with at most ``check_limit`` real points the dense
    complexity is computed as well, and the gap is logged and recorded.
    """
    eig = eigendecompose(K_op) if eig is None else eig
    solve = pcg_solve(K_op, noise, y, tol, max_iter, eig=eig)
    complexity = _complexity(eig, noise.sigma_sq, y.M)
    ml = _assemble(y, solve, complexity.value, complexity.clamped)
    check_limit = settings.complexity_check_limit if check_limit is None else check_limit
    if y.W and y.M <= check_limit:
        try:
            exact = exact_complexity(K_op, noise, max_points=check_limit)
        except NumericalDegeneracyError as exc:
            logger.warning(f"Skipping the dense complexity check: {exc}")
        else:
            ml = ml.model_copy(update={"complexity_exact": exact})
            log_event(logger, "complexity_gap", N=y.N, M=y.M, approximate=ml.complexity,
                      exact=exact, gap=ml.complexity_gap)
    log_event(logger, "log_marginal_likelihood", value=ml.value, model_fit=ml.model_fit,
              complexity=ml.complexity, exact=y.M == y.N)
    return ml


def exact_complexity(K_op: KroneckerOperator, noise: NoiseModel, max_points: int = 4096) -> float:
    """Dense log|K_M + s^2 I|, for measuring the approximation gap on small problems."""
    real = np.flatnonzero(noise.mask)
    if real.size > max_points:
        raise ShapeError(f"dense complexity limited to {max_points} points, got {real.size}")
    cols = np.stack([kron_column(K_op, int(j))[real] for j in real], axis=1)
    sign, logdet = np.linalg.slogdet(cols + noise.sigma_sq * np.eye(real.size))
    if sign <= 0:
        raise NumericalDegeneracyError("dense K_M + noise is not positive definite")
    return float(logdet)


def _mode_apply(T: np.ndarray, F: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(F, T, axes=(1, axis)), 0, axis)


def _fit_contractions(K_op: KroneckerOperator, alpha: np.ndarray) -> List[np.ndarray]:
    """G_f with alpha^T (K with factor f replaced by D) alpha = sum(D * G_f)."""
    T = alpha.reshape(K_op.sizes)
    out = []
    for f in range(K_op.P):
        Tf = T
        for g, F in enumerate(K_op.factors):
            if g != f:
                Tf = _mode_apply(Tf, F, g)
        others = [g for g in range(K_op.P) if g != f]
        out.append(np.tensordot(T, Tf, axes=(others, others)))
    return out


def _eigen_weights(eig: EigenSystem, idx: np.ndarray, weights: np.ndarray) -> List[np.ndarray]:
    """w_f[k] = sum over selected i with i_f = k of weight_i * prod_{g != f} V_g[i_g]."""
    parts = eig.factor_indices(idx)
    gathered = [v[i] for v, i in zip(eig.V, parts)]
    out = []
    for f in range(len(eig.V)):
        contrib = weights.copy()
        for g, vals in enumerate(gathered):
            if g != f:
                contrib = contrib * vals
        out.append(np.bincount(parts[f], weights=contrib, minlength=eig.sizes[f]))
    return out


def evaluate(kernel: SeparableKernel, hypers: HyperParams, y: ObservationSet,
             tol: Optional[float] = None, max_iter: Optional[int] = None,
             alpha0: Optional[np.ndarray] = None) -> Tuple[MarginalLikelihood, np.ndarray, PosteriorSolve]:
    """Approximate log marginal likelihood, its gradient over hypers.vector(), and the solve."""
    axes = y.grid.axes
    raw = hypers.raw
    sigma_sq = hypers.noise_var
    K_op = covariance_operator(kernel, axes, raw)
    noise = NoiseModel(sigma_sq=sigma_sq, mask=y.mask)
    eig = eigendecompose(K_op)
    solve = pcg_solve(K_op, noise, y, tol, max_iter, alpha0=alpha0, eig=eig)
    terms = _complexity(eig, sigma_sq, y.M)
    ml = _assemble(y, solve, terms.value, terms.clamped)

    grad = np.zeros(kernel.n_params + 1)
    fit_G = _fit_contractions(K_op, solve.alpha)
    eig_w = terms.factor_weights
    for p, dK in enumerate(kernel.gram_grads(axes, raw)):
        f = kernel.P - 1 - p
        Q = eig.Q[f]
        # d lambda_k = q_k^T dK q_k
        dlam = np.einsum("ik,pij,jk->pk", Q, dK, Q, optimize=True)
        fit_term = np.einsum("pij,ij->p", dK, fit_G[f])
        grad[kernel.slices[p]] = 0.5 * fit_term - 0.5 * dlam @ eig_w[f]
    grad[-1] = 0.5 * sigma_sq * (float(np.dot(solve.alpha, solve.alpha)) - terms.inverse_sum)
    log_event(logger, "ml_gradient", value=ml.value, grad_max=float(np.max(np.abs(grad))),
              iterations=solve.iterations)
    return ml, grad, solve


def ml_gradient(kernel: SeparableKernel, hypers: HyperParams, y: ObservationSet,
                tol: Optional[float] = None, max_iter: Optional[int] = None) -> np.ndarray:
    """Gradient of the approximate log marginal likelihood over ``hypers.vector()``."""
    return evaluate(kernel, hypers, y, tol, max_iter)[1]


class GridGP:
    """A separable-kernel GP bound to one observation set.

    Keeps the last solution to warm-start the next solve, which is what the
    optimizer wants between nearby parameter values.
    """

    def __init__(self, kernel: SeparableKernel, y: ObservationSet,
                 tol: Optional[float] = None, max_iter: Optional[int] = None):
        if kernel.P != y.grid.P:
            raise ShapeError(f"kernel has {kernel.P} dimensions, grid has {y.grid.P}")
        self.kernel = kernel
        self.y = y
        self.tol = settings.pcg_tol if tol is None else tol
        self.max_iter = settings.pcg_max_iter if max_iter is None else max_iter
        self._alpha: Optional[np.ndarray] = None
        self.evaluations = 0

    def evaluate(self, hypers: HyperParams) -> Tuple[MarginalLikelihood, np.ndarray]:
        ml, grad, solve = evaluate(self.kernel, hypers, self.y, self.tol, self.max_iter, alpha0=self._alpha)
        self._alpha = solve.alpha
        self.evaluations += 1
        return ml, grad

    def operator(self, hypers: HyperParams) -> KroneckerOperator:
        return covariance_operator(self.kernel, self.y.grid.axes, hypers.raw)

    def predict(self, hypers: HyperParams, variance_indices: Optional[Sequence[int]] = None,
                variance_budget: Optional[int] = None, seed: int = 0) -> PredictiveResult:
        """Posterior mean everywhere; latent variance at (a capped sample of) the given nodes."""
        K_op = self.operator(hypers)
        noise = NoiseModel(sigma_sq=hypers.noise_var, mask=self.y.mask)
        solve = pcg_solve(K_op, noise, self.y, self.tol, self.max_iter)
        mean = predict_mean(K_op, solve)
        idx = np.zeros(0, dtype=int)
        subsampled = False
        if variance_indices is not None:
            idx = np.asarray(variance_indices, dtype=int)
            budget = settings.variance_budget if variance_budget is None else variance_budget
            if idx.size > budget:
                rng = np.random.default_rng(seed)
                idx = np.sort(rng.choice(idx, size=budget, replace=False))
                subsampled = True
        variance = predict_variance(K_op, noise, idx, self.tol, self.max_iter) if idx.size else np.zeros(0)
        return PredictiveResult(mean=mean, variance_indices=idx.tolist(), variance=variance,
                                noise_var=hypers.noise_var, variance_subsampled=subsampled)
