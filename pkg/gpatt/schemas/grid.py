from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from gpatt.schemas.arrays import BoolArray, FloatArray


class Grid(BaseModel):
    """Cartesian product of P strictly increasing coordinate axes.

    Flattening is column-major: the first axis varies fastest.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    axes: List[FloatArray]

    @field_validator("axes")
    @classmethod
    def _check_axes(cls, axes: List[np.ndarray]) -> List[np.ndarray]:
        if len(axes) < 1:
            raise ValueError("a grid needs at least one axis")
        for p, axis in enumerate(axes):
            if axis.ndim != 1 or axis.size < 2:
                raise ValueError(f"axis {p} must be a 1-D array with at least 2 points")
            if not np.all(np.isfinite(axis)):
                raise ValueError(f"axis {p} has non-finite coordinates")
            if np.any(np.diff(axis) <= 0):
                raise ValueError(f"axis {p} is not strictly increasing")
        return axes

    @property
    def P(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(a.size) for a in self.axes)

    @property
    def N(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def spacing(self, p: int) -> float:
        """Median spacing of axis p."""
        return float(np.median(np.diff(self.axes[p])))

    def extent(self, p: int) -> float:
        axis = self.axes[p]
        return float(axis[-1] - axis[0])


def _run_lengths(mask: np.ndarray) -> Tuple[bool, List[int]]:
    change = np.flatnonzero(np.diff(mask.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [mask.size]])
    return bool(mask[0]), np.diff(bounds).astype(int).tolist()


def _from_run_lengths(first: bool, runs: List[int]) -> np.ndarray:
    values = [(first if i % 2 == 0 else not first) for i in range(len(runs))]
    return np.repeat(np.array(values, dtype=bool), runs)


class ObservationSet(BaseModel):
    """Grid-aligned targets; ``mask`` is True at real observations.

    Values at imaginary (masked-out) slots are stored as exact zeros.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: Grid
    values: FloatArray
    mask: BoolArray

    @model_validator(mode="before")
    @classmethod
    def _zero_imaginary(cls, data: Any) -> Any:
        if isinstance(data, dict) and "values" in data and "mask" in data:
            values = np.array(data["values"], dtype=float).ravel()
            mask = np.array(data["mask"], dtype=bool).ravel()
            if values.shape == mask.shape:
                data = {**data, "values": np.where(mask, values, 0.0), "mask": mask}
        return data

    @model_validator(mode="after")
    def _check_sizes(self) -> "ObservationSet":
        n = self.grid.N
        if self.values.shape != (n,) or self.mask.shape != (n,):
            raise ValueError(f"values and mask must have length N={n}")
        if not self.mask.any():
            raise ValueError("an observation set needs at least one real observation")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("observed values must be finite")
        return self

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def M(self) -> int:
        return int(self.mask.sum())

    @property
    def W(self) -> int:
        return self.N - self.M

    @property
    def observed(self) -> np.ndarray:
        """y_M: the real targets in flattening order."""
        return self.values[self.mask]

    def to_header(self) -> Dict[str, Any]:
        first, runs = _run_lengths(self.mask)
        return {
            "axes": [a.tolist() for a in self.grid.axes],
            "N": self.N,
            "M": self.M,
            "mask": {"first": first, "runs": runs},
        }

    @classmethod
    def from_header(cls, header: Dict[str, Any], values: np.ndarray) -> "ObservationSet":
        grid = Grid(axes=header["axes"])
        mask = _from_run_lengths(header["mask"]["first"], header["mask"]["runs"])
        return cls(grid=grid, values=values, mask=mask)
