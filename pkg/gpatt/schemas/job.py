from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from gpatt.schemas.results import TrainConfig

Command = Literal["train", "predict", "inpaint", "synth", "spectrum", "stress"]


class Job(BaseModel):
    """A fully resolved CLI invocation."""
    model_config = ConfigDict(extra="forbid")

    command: Command
    inputs: List[Path] = Field(default_factory=list)
    mask: List[str] = Field(default_factory=list)
    kernel: Optional[str] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    out: Path = Path("out")
    ground_truth: Optional[Path] = None
    report: Optional[Path] = None
    grid: Optional[str] = None
    noise_var: float = Field(default=1e-2, gt=0)
    suite: Optional[Literal["runtime", "holesize"]] = None
    sizes: List[int] = Field(default_factory=list)
    holes: List[float] = Field(default_factory=list)
    n_freqs: int = Field(default=512, gt=1)
    max_freq: Optional[float] = None
    baseline: bool = False


class RunManifest(BaseModel):
    """Written by every run. ``job`` is None when the flags never formed a valid Job."""
    command: str
    job: Optional[Job] = None
    seed: int
    versions: dict
    input_hashes: dict
    artifacts: List[str] = Field(default_factory=list)
    missing: List[str] = Field(default_factory=list)
    status: int = 0
    error: Optional[str] = None
    wallclock: float = 0.0
