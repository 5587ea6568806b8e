"""
Kronecker-structured linear algebra.

A :class:`KroneckerOperator` with factors ``[F_1, ..., F_P]`` represents
``F_1 kron ... kron F_P``: the first factor acts on the slowest-varying index.
Grid vectors are flattened column-major (first grid axis fastest), so the
factor for grid axis p sits at position ``P - 1 - p``; use
:meth:`KroneckerOperator.for_grid` to build operators from per-axis matrices.
"""
import heapq
import itertools
import logging
from functools import cached_property, reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from gpatt.core.config import settings
from gpatt.core.errors import ContractViolation, NumericalDegeneracyError, ParameterError, SamplingError, ShapeError
from gpatt.core.logging import log_event

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-12


class KroneckerOperator:
    """K = F_1 kron ... kron F_P, never materialised."""

    def __init__(self, factors: Sequence[np.ndarray], symmetric: bool = True):
        self.factors: List[np.ndarray] = [np.array(F, dtype=float) for F in factors]
        if not self.factors:
            raise ShapeError("a Kronecker operator needs at least one factor")
        for i, F in enumerate(self.factors):
            if F.ndim != 2 or F.shape[0] != F.shape[1]:
                raise ShapeError(f"factor {i} must be square, got shape {F.shape}")
            F.setflags(write=False)
        self.symmetric = symmetric
        if symmetric:
            for i, F in enumerate(self.factors):
                scale = max(np.max(np.abs(F)), np.finfo(float).tiny)
                if np.max(np.abs(F - F.T)) > SYMMETRY_RTOL * scale:
                    raise ContractViolation(f"factor {i} is not symmetric")

    @classmethod
    def for_grid(cls, per_axis: Sequence[np.ndarray], symmetric: bool = True) -> "KroneckerOperator":
        """Operator on column-major grid vectors from per-axis matrices."""
        return cls(list(reversed(per_axis)), symmetric=symmetric)

    @property
    def P(self) -> int:
        return len(self.factors)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(F.shape[0] for F in self.factors)

    @property
    def N(self) -> int:
        return int(np.prod(self.sizes, dtype=np.int64))

    def transpose(self) -> "KroneckerOperator":
        return KroneckerOperator([F.T for F in self.factors], symmetric=self.symmetric)

    def dense(self) -> np.ndarray:
        return reduce(np.kron, self.factors)

    def diagonal(self) -> np.ndarray:
        return reduce(np.kron, [np.diag(F) for F in self.factors])

    def __matmul__(self, u: np.ndarray) -> np.ndarray:
        return kron_mvprod(self, u)


def kron_mvprod(op: KroneckerOperator, u: np.ndarray) -> np.ndarray:
    """K @ u by P rounds of reshape, multiply, transpose.

    ``u`` may be a vector of length N or an N x k block; every column is
    multiplied in the same pass.
    """
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    x = u.reshape(-1, 1) if single else u
    if x.ndim != 2 or x.shape[0] != op.N:
        raise ShapeError(f"expected {op.N} rows, got shape {u.shape}")
    N, k = x.shape
    for F in reversed(op.factors):
        n = F.shape[0]
        X = x.reshape((n, N // n, k), order="F")
        x = np.tensordot(F, X, axes=(1, 0)).reshape((N, k))
    return x[:, 0] if single else x


def kron_column(op: KroneckerOperator, j: int) -> np.ndarray:
    """Column j of K."""
    if not 0 <= j < op.N:
        raise ShapeError(f"column {j} out of range for N={op.N}")
    idx = np.unravel_index(j, op.sizes)
    return reduce(np.kron, [F[:, i] for F, i in zip(op.factors, idx)])


class EigenSystem:
    """Per-factor eigendecompositions K_p = Q_p diag(V_p) Q_p^T.

    ``merged`` (all N products of factor eigenvalues, in the same order as the
    columns of Q_1 kron ... kron Q_P) is built on first access.
    """

    def __init__(self, Q: Sequence[np.ndarray], V: Sequence[np.ndarray]):
        self.Q = list(Q)
        self.V = list(V)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(v.size for v in self.V)

    @property
    def N(self) -> int:
        return int(np.prod(self.sizes, dtype=np.int64))

    @cached_property
    def merged(self) -> np.ndarray:
        return reduce(np.kron, self.V)

    @cached_property
    def scale(self) -> float:
        """Upper bound on |lambda_i|."""
        return float(np.prod([np.max(np.abs(v)) for v in self.V]))

    def q_operator(self) -> KroneckerOperator:
        return KroneckerOperator(self.Q, symmetric=False)

    def qt_operator(self) -> KroneckerOperator:
        return KroneckerOperator([q.T for q in self.Q], symmetric=False)

    def factor_indices(self, linear: np.ndarray) -> Tuple[np.ndarray, ...]:
        return np.unravel_index(np.asarray(linear), self.sizes)

    def clean(self, lam: np.ndarray, rounding_tol: Optional[float] = None) -> Tuple[np.ndarray, int]:
        """Zero negative merged eigenvalues; count those beyond rounding noise."""
        tol = (settings.eigen_rounding_tol if rounding_tol is None else rounding_tol) * self.scale
        clamped = int(np.count_nonzero(lam < -tol))
        return np.maximum(lam, 0.0), clamped


def eigendecompose(op: KroneckerOperator) -> EigenSystem:
    if not op.symmetric:
        raise ContractViolation("eigendecompose needs symmetric factors")
    Q, V = [], []
    for F in op.factors:
        vals, vecs = linalg.eigh(F)
        V.append(vals)
        Q.append(vecs)
    return EigenSystem(Q, V)


def _merged_blocks(eig: EigenSystem, limit: int):
    """Yield the merged eigenvalues in order, all at once or one lattice row at a time."""
    if eig.N <= limit or len(eig.V) == 1:
        yield eig.merged
        return
    *lead, last = eig.V
    for combo in itertools.product(*lead):
        yield float(np.prod(combo)) * last


def _check_noise(noise_var: float) -> None:
    if not noise_var > 0:
        raise ParameterError(f"noise variance must be positive, got {noise_var!r}")


def apply_inverse_full_grid(eig: EigenSystem, noise_var: float, y: np.ndarray) -> np.ndarray:
    """(K + s^2 I)^-1 y = Q (V + s^2 I)^-1 Q^T y."""
    _check_noise(noise_var)
    lam, _ = eig.clean(eig.merged)
    a = kron_mvprod(eig.qt_operator(), y)
    denom = lam + noise_var
    a = a / (denom if a.ndim == 1 else denom[:, None])
    return kron_mvprod(eig.q_operator(), a)


def log_det_terms(eig: EigenSystem, noise_var: float, limit: Optional[int] = None) -> Tuple[float, int]:
    """Sum of log(lambda_i + s^2) and the number of clamp events."""
    _check_noise(noise_var)
    limit = settings.eigen_enumeration_limit if limit is None else limit
    total, clamped = 0.0, 0
    for block in _merged_blocks(eig, limit):
        lam, n_clamped = eig.clean(block)
        shifted = lam + noise_var
        if np.any(shifted <= 0):
            raise NumericalDegeneracyError("lambda + noise variance is not positive")
        total += float(np.sum(np.log(shifted)))
        clamped += n_clamped
    if clamped:
        log_event(logger, "eigen_clamp", level=logging.WARNING, clamped=clamped, N=eig.N)
    return total, clamped


def log_det_full_grid(eig: EigenSystem, noise_var: float) -> float:
    """log |K + s^2 I| = sum_i log(lambda_i + s^2)."""
    return log_det_terms(eig, noise_var)[0]


def _lattice_top(V: Sequence[np.ndarray], m: int) -> np.ndarray:
    """Best-first walk over the product lattice of descending factor eigenvalues."""
    orders = [np.argsort(-np.maximum(v, 0.0)) for v in V]
    sorted_v = [np.maximum(v, 0.0)[o] for v, o in zip(V, orders)]
    sizes = tuple(v.size for v in V)

    def value(pos):
        return float(np.prod([sv[i] for sv, i in zip(sorted_v, pos)]))

    start = (0,) * len(V)
    heap = [(-value(start), start)]
    seen = {start}
    picked = []
    while heap and len(picked) < m:
        _, pos = heapq.heappop(heap)
        picked.append(tuple(o[i] for o, i in zip(orders, pos)))
        for d in range(len(V)):
            if pos[d] + 1 < sizes[d]:
                nxt = pos[:d] + (pos[d] + 1,) + pos[d + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (-value(nxt), nxt))
    cols = np.array(picked, dtype=np.int64).T
    return np.ravel_multi_index(tuple(cols), sizes)


def top_eigen_indices(eig: EigenSystem, m: int, limit: Optional[int] = None) -> np.ndarray:
    """Merged indices of the m largest eigenvalues (order unspecified)."""
    if not 1 <= m <= eig.N:
        raise ParameterError(f"cannot select {m} of {eig.N} eigenvalues")
    if m == eig.N:
        return np.arange(eig.N)
    limit = settings.eigen_enumeration_limit if limit is None else limit
    if eig.N <= limit:
        return np.argpartition(-eig.merged, m - 1)[:m]
    return _lattice_top(eig.V, m)


def apply_sqrt_full_grid(eig: EigenSystem, u: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """Q V^(1/2) Q^T u for a PSD Kronecker matrix."""
    for p, v in enumerate(eig.V):
        if np.min(v) < -rel_tol * max(np.max(np.abs(v)), np.finfo(float).tiny):
            raise SamplingError(f"factor {p} has a negative eigenvalue {np.min(v):.3g}")
    lam = np.maximum(reduce(np.kron, [np.maximum(v, 0.0) for v in eig.V]), 0.0)
    a = kron_mvprod(eig.qt_operator(), u)
    root = np.sqrt(lam)
    a = a * (root if a.ndim == 1 else root[:, None])
    return kron_mvprod(eig.q_operator(), a)
