"""Pydantic field types for numpy arrays."""
from typing import Annotated

import numpy as np
from pydantic import BeforeValidator, PlainSerializer


def _float_array(value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr


def _bool_array(value) -> np.ndarray:
    arr = np.array(value, dtype=bool)
    arr.setflags(write=False)
    return arr


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_float_array),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]

BoolArray = Annotated[
    np.ndarray,
    BeforeValidator(_bool_array),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]
