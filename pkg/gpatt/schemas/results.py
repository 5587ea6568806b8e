from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gpatt.core.config import settings
from gpatt.schemas.arrays import BoolArray, FloatArray
from gpatt.schemas.kernel import HyperParams


class PosteriorSolve(BaseModel):
    """Lifted solution of (K_N + D_N) alpha = y; zero at imaginary slots."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    alpha: FloatArray
    iterations: int
    final_residual: float


class MarginalLikelihood(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    model_fit: float
    complexity: float
    noise_const: float
    clamped_eigenvalues: int = 0
    # dense log|K_M + sigma^2 I|, when it was small enough to compute
    complexity_exact: Optional[float] = None

    @property
    def complexity_gap(self) -> Optional[float]:
        if self.complexity_exact is None:
            return None
        return self.complexity - self.complexity_exact


class PredictiveResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: FloatArray
    variance_indices: List[int] = Field(default_factory=list)
    variance: FloatArray = Field(default_factory=lambda: np.zeros(0))
    noise_var: float
    variance_subsampled: bool = False


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    smse: float = Field(ge=0)
    msll: float
    n_test: int
    variance_subsampled: bool = False


class KernelSlice(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dimension: int
    taus: FloatArray
    true_values: Optional[FloatArray] = None
    learned_values: FloatArray
    discrepancy: Optional[float] = None


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: str = "smp"
    A: int = Field(default=10, ge=1)
    restarts: int = Field(default_factory=lambda: settings.restarts, ge=1)
    max_opt_iter: int = Field(default_factory=lambda: settings.max_opt_iter, gt=0)
    opt_tol: float = Field(default_factory=lambda: settings.opt_tol, gt=0)
    seed: int = Field(default_factory=lambda: settings.seed, ge=0, lt=2**64)
    pcg_tol: float = Field(default_factory=lambda: settings.pcg_tol, gt=0)
    pcg_max_iter: int = Field(default_factory=lambda: settings.pcg_max_iter, gt=0)
    variance_budget: int = Field(default_factory=lambda: settings.variance_budget, gt=0)
    prune_threshold: float = Field(default_factory=lambda: settings.prune_threshold, gt=0)
    init_range_scale: float = Field(default_factory=lambda: settings.init_range_scale, gt=0)
    init_sd_scale: float = Field(default_factory=lambda: settings.init_sd_scale, gt=0)
    n_jobs: int = Field(default_factory=lambda: settings.n_jobs, ge=1)

    @model_validator(mode="after")
    def _known_family(self) -> "TrainConfig":
        if self.family not in ("smp", "se", "matern32", "rq"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        return self


class RestartSummary(BaseModel):
    restart: int
    final_lml: Optional[float] = None
    iterations: int = 0
    converged: bool = False
    error: Optional[str] = None


class TrainReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    family: str
    A: int
    P: int
    initial_hypers: HyperParams
    final_hypers: HyperParams
    final_lml: float
    lml_trace: List[float]
    pruned_components: List[List[int]]
    restarts: List[RestartSummary]
    wallclock: float
    grad_max_norm: Optional[float] = None
    # median axis spacing per dimension; exported spectra stop at 0.5 / spacing
    spacings: List[float] = Field(default_factory=list)


class NoiseModel(BaseModel):
    """sigma^2 on real slots; imaginary slots carry infinite noise.

    The infinite-noise limit is taken exactly by the preconditioner
    ``C = diag(mask / sigma)``, which is zero on imaginary slots.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sigma_sq: float = Field(gt=0)
    mask: BoolArray

    @property
    def preconditioner(self) -> np.ndarray:
        return self.mask / np.sqrt(self.sigma_sq)


class RuntimePoint(BaseModel):
    N: int
    seconds: float
    pcg_iterations: int


class HolePoint(BaseModel):
    fraction: float
    family: str
    smse: float
    msll: float


class StressReport(BaseModel):
    suite: str
    runtime: List[RuntimePoint] = Field(default_factory=list)
    holes: List[HolePoint] = Field(default_factory=list)
    slope: Optional[float] = None
