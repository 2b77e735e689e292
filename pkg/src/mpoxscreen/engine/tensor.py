"""Dense float32 tensor carried through the inference graph.

Tensors are rank-4 (N,C,H,W) activations or rank-2 (rows,cols) matrices.
Data is contiguous row-major float32; heavy math accumulates in float64
and stores back as float32 for cross-platform reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TensorError(ValueError):
    pass


@dataclass(frozen=True)
class Tensor:
    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if not isinstance(arr, np.ndarray):
            raise TensorError(f"tensor data must be a numpy array, got {type(arr).__name__}")
        if arr.dtype != np.float32:
            raise TensorError(f"tensor dtype must be float32, got {arr.dtype}")
        if arr.ndim not in (2, 4):
            raise TensorError(f"tensor rank must be 2 or 4, got {arr.ndim}")
        if any(d < 1 for d in arr.shape):
            raise TensorError(f"all tensor dims must be >= 1, got shape {arr.shape}")
        if not arr.flags["C_CONTIGUOUS"]:
            object.__setattr__(self, "data", np.ascontiguousarray(arr))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Tensor":
        return cls(np.ascontiguousarray(arr, dtype=np.float32))

    @classmethod
    def nchw(cls, arr: np.ndarray) -> "Tensor":
        t = cls.from_array(arr)
        if t.data.ndim != 4:
            raise TensorError(f"expected NCHW tensor, got rank {t.data.ndim}")
        return t

    def require_single_image(self) -> "Tensor":
        if self.data.ndim != 4 or self.data.shape[0] != 1:
            raise TensorError(f"inference inputs must be N=1 NCHW, got shape {self.shape}")
        return self
