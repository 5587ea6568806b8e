from typing import Annotated, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, field_validator, model_validator

from gpatt.schemas.arrays import FloatArray


class SMComponent(BaseModel):
    model_config = ConfigDict(frozen=True)

    weight_sq: PositiveFloat
    mean_freq: float = Field(ge=0)
    var_freq: PositiveFloat


class SMKernel1D(BaseModel):
    model_config = ConfigDict(frozen=True)

    components: List[SMComponent] = Field(min_length=1)

    @property
    def A(self) -> int:
        return len(self.components)

    @property
    def k0(self) -> float:
        return float(sum(c.weight_sq for c in self.components))


class SMPKernel(BaseModel):
    """One spectral mixture per input dimension, multiplied together."""
    model_config = ConfigDict(frozen=True)

    per_dim: List[SMKernel1D] = Field(min_length=1)

    @model_validator(mode="after")
    def _same_component_count(self) -> "SMPKernel":
        counts = {k.A for k in self.per_dim}
        if len(counts) != 1:
            raise ValueError(f"every dimension needs the same component count, got {sorted(counts)}")
        return self

    @property
    def P(self) -> int:
        return len(self.per_dim)

    @property
    def A(self) -> int:
        return self.per_dim[0].A


class HyperParams(BaseModel):
    """Unconstrained kernel parameters plus log noise variance.

    ``layout`` maps each parameter role (e.g. ``"d0.sm2.log_weight_sq"``) to
    its index in ``raw``. The optimizer works on :meth:`vector`, which is
    ``raw`` followed by ``noise_raw``.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    raw: FloatArray
    layout: Dict[str, int]
    noise_raw: float

    @model_validator(mode="after")
    def _check_layout(self) -> "HyperParams":
        if self.raw.ndim != 1:
            raise ValueError("raw must be a flat vector")
        if sorted(self.layout.values()) != list(range(self.raw.size)):
            raise ValueError("layout must index every raw entry exactly once")
        return self

    @property
    def noise_var(self) -> float:
        return float(np.exp(self.noise_raw))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.raw, [self.noise_raw]])

    def with_vector(self, vector: np.ndarray) -> "HyperParams":
        vector = np.asarray(vector, dtype=float)
        return HyperParams(raw=vector[:-1], layout=self.layout, noise_raw=float(vector[-1]))

    def names(self) -> List[str]:
        by_index = sorted(self.layout.items(), key=lambda item: item[1])
        return [name for name, _ in by_index] + ["log_noise_var"]


# Compositional kernel trees (synthetic ground truth and fixed kernels)

class _Leaf(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    variance: PositiveFloat = 1.0


class SENode(_Leaf):
    type: Literal["se"]
    lengthscale: PositiveFloat


class Matern32Node(_Leaf):
    type: Literal["matern32"]
    lengthscale: PositiveFloat


class RQNode(_Leaf):
    type: Literal["rq"]
    lengthscale: PositiveFloat
    alpha: PositiveFloat


class PeriodicNode(_Leaf):
    type: Literal["periodic"]
    omega: PositiveFloat
    lengthscale: PositiveFloat


class SMNode(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    type: Literal["sm"]
    components: List[SMComponent] = Field(min_length=1)


class SumNode(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    type: Literal["sum"]
    children: List["KernelNode"] = Field(min_length=1)


class ProductNode(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    type: Literal["product"]
    children: List["KernelNode"] = Field(min_length=1)


KernelNode = Annotated[
    Union[SENode, Matern32Node, RQNode, PeriodicNode, SMNode, SumNode, ProductNode],
    Field(discriminator="type"),
]
SumNode.model_rebuild()
ProductNode.model_rebuild()


FAMILIES = ("smp", "se", "matern32", "rq")


class KernelSpec(BaseModel):
    """Kernel description parsed from JSON.

    Either a trainable family, ``{"type": "smp", "P": 2, "A": 30}`` or
    ``{"type": "se", "P": 2}``, a fixed separable kernel
    ``{"type": "separable", "dims": [<tree>, ...]}`` with one tree per
    input dimension, or a root ``{"type": "sum" | "product", "children": [...]}``
    tree that is used for every dimension.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    type: Literal["smp", "se", "matern32", "rq", "separable", "sum", "product"]
    P: Optional[int] = Field(default=None, ge=1)
    A: Optional[int] = Field(default=None, ge=1)
    dims: Optional[List[KernelNode]] = None
    children: Optional[List[KernelNode]] = None

    @field_validator("dims", "children")
    @classmethod
    def _non_empty(cls, nodes):
        if nodes is not None and not nodes:
            raise ValueError("dims and children must not be empty")
        return nodes

    @model_validator(mode="after")
    def _complete(self) -> "KernelSpec":
        if self.type == "separable":
            if self.dims is None:
                raise ValueError("a separable kernel needs 'dims'")
        elif self.type in ("sum", "product"):
            if self.children is None or self.dims is not None:
                raise ValueError(f"a root {self.type} kernel needs 'children' and no 'dims'")
        elif self.type == "smp" and self.A is None:
            raise ValueError("an smp kernel needs 'A'")
        return self

    @property
    def is_family(self) -> bool:
        return self.type in FAMILIES

    def tree(self) -> Optional[Union[SumNode, ProductNode]]:
        """The root composite as a tree node, or None for other kernel types."""
        if self.type == "sum":
            return SumNode(type="sum", children=self.children)
        if self.type == "product":
            return ProductNode(type="product", children=self.children)
        return None

    def dimension_count(self) -> Optional[int]:
        return len(self.dims) if self.dims is not None else self.P
