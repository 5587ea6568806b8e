from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", env_prefix="GPATT_",
        case_sensitive=False, extra="ignore")

    app_name: str = "gpatt"

    # Logging. log_json switches diagnostics to one JSON object per line.
    log_level: str = "INFO"
    log_json: bool = False

    # Preconditioned conjugate gradients
    pcg_tol: float = Field(default=1e-6, gt=0)
    pcg_max_iter: int = Field(default=1000, gt=0)

    # Predictive variance: one solve per test point, capped and batched
    variance_budget: int = Field(default=5000, gt=0)
    variance_batch: int = Field(default=64, gt=0)

    # Above this many merged eigenvalues the log-det streams and the top-M
    # selection walks the eigenvalue lattice instead of enumerating it.
    eigen_enumeration_limit: int = Field(default=1_000_000, gt=0)
    # Merged eigenvalues in (-tol * max|lambda|, 0) are rounding noise
    eigen_rounding_tol: float = Field(default=1e-10, gt=0)
    # log_marginal_likelihood also computes the dense complexity up to this many real points; 0 turns it off
    complexity_check_limit: int = Field(default=512, ge=0)

    # Training
    restarts: int = Field(default=3, ge=1)
    max_opt_iter: int = Field(default=200, gt=0)
    opt_tol: float = Field(default=1e-5, gt=0)
    prune_threshold: float = Field(default=1e-4, gt=0)
    init_range_scale: float = Field(default=1.0, gt=0)
    init_sd_scale: float = Field(default=0.5, gt=0)
    seed: int = 0
    n_jobs: int = Field(default=1, ge=1)


settings = Settings()
