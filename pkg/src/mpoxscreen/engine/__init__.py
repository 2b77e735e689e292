"""Inference engine: tensors, operator kernels, and the graph executor."""

from .tensor import Tensor, TensorError
from .ops import OpError, ShapeMismatch, conv_output_hw
from .graph import (
    VALID_KINDS,
    ExecutionTrace,
    ExecutionError,
    GraphError,
    GraphValidationError,
    NonFiniteError,
    OpNode,
    execute,
    validate_graph,
)

__all__ = [
    "Tensor", "TensorError", "OpError", "ShapeMismatch", "conv_output_hw",
    "VALID_KINDS", "ExecutionTrace", "ExecutionError", "GraphError",
    "GraphValidationError", "NonFiniteError", "OpNode", "execute",
    "validate_graph",
]
