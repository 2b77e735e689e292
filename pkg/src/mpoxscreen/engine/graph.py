"""Operator graph: node model, static validation, and the executor.

Graphs are stored already topologically sorted (node inputs may only
reference lower ids), so execution is a single forward walk. A loaded
graph is immutable; every call to :func:`execute` owns its own activation
map, so concurrent executions of one model are safe.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .tensor import Tensor

VALID_KINDS = frozenset({
    "INPUT", "CONV2D", "SILU", "ADD", "CONCAT", "SPLIT2", "MAXPOOL",
    "GAP", "LINEAR", "SOFTMAX", "DROPOUT_NOOP", "FLATTEN",
})

# kind -> (min_inputs, max_inputs); None means unbounded
_ARITY = {
    "INPUT": (0, 0),
    "CONV2D": (1, 1),
    "SILU": (1, 1),
    "ADD": (2, 2),
    "CONCAT": (2, None),
    "SPLIT2": (1, 1),
    "MAXPOOL": (1, 1),
    "GAP": (1, 1),
    "LINEAR": (1, 1),
    "SOFTMAX": (1, 1),
    "DROPOUT_NOOP": (1, 1),
    "FLATTEN": (1, 1),
}


class GraphError(ValueError):
    """Graph-level failure carrying the offending node id."""

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message if node_id is None else f"node {node_id}: {message}")
        self.node_id = node_id


class GraphValidationError(GraphError):
    pass


class ExecutionError(GraphError):
    pass


class NonFiniteError(ExecutionError):
    pass


@dataclass(frozen=True)
class OpNode:
    id: int
    kind: str
    inputs: tuple[int, ...] = ()
    attrs: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)  # name -> np.ndarray (float32)


@dataclass
class ExecutionTrace:
    node_outputs: dict[int, Tensor] | None
    node_times_us: dict[int, float]
    total_us: float = 0.0


def _require_attr(node: OpNode, name: str):
    if name not in node.attrs:
        raise GraphValidationError(f"{node.kind} missing attr '{name}'", node.id)
    return node.attrs[name]


def _require_weight(node: OpNode, name: str) -> np.ndarray:
    if name not in node.weights:
        raise GraphValidationError(f"{node.kind} missing weight '{name}'", node.id)
    return node.weights[name]


def validate_graph(nodes: list[OpNode], input_shape: tuple[int, int, int, int],
                   class_count: int) -> dict[int, tuple[int, ...]]:
    """Static checks plus full shape inference; returns id -> shape."""
    if not nodes:
        raise GraphValidationError("graph has no nodes")

    seen: set[int] = set()
    prev_id = -1
    for node in nodes:
        if node.kind not in VALID_KINDS:
            raise GraphValidationError(f"unknown op kind '{node.kind}'", node.id)
        if node.id in seen or node.id <= prev_id:
            raise GraphValidationError("node ids must be unique and increasing", node.id)
        seen.add(node.id)
        prev_id = node.id
        lo, hi = _ARITY[node.kind]
        n_in = len(node.inputs)
        if n_in < lo or (hi is not None and n_in > hi):
            raise GraphValidationError(
                f"{node.kind} takes {lo}{'' if hi == lo else '+' if hi is None else f'..{hi}'} "
                f"inputs, got {n_in}", node.id)
        for ref in node.inputs:
            if ref >= node.id:
                raise GraphValidationError(
                    f"input {ref} is not a lower id (cycle or forward reference)", node.id)
            if ref not in seen:
                raise GraphValidationError(f"input {ref} does not exist", node.id)

    input_nodes = [n for n in nodes if n.kind == "INPUT"]
    if len(input_nodes) != 1:
        raise GraphValidationError(f"graph must have exactly one INPUT node, found {len(input_nodes)}")
    if nodes[-1].kind != "SOFTMAX":
        raise GraphValidationError("terminal node must be SOFTMAX", nodes[-1].id)

    shapes: dict[int, tuple[int, ...]] = {}
    for node in nodes:
        shapes[node.id] = _infer_node_shape(node, shapes, input_shape)

    out_shape = shapes[nodes[-1].id]
    if out_shape != (1, class_count):
        raise GraphValidationError(
            f"graph output shape {out_shape} does not match (1, {class_count}) classes",
            nodes[-1].id)
    return shapes


def _infer_node_shape(node: OpNode, shapes: dict[int, tuple[int, ...]],
                      input_shape: tuple[int, int, int, int]) -> tuple[int, ...]:
    ins = [shapes[i] for i in node.inputs]
    k = node.kind
    if k == "INPUT":
        return input_shape
    if k == "CONV2D":
        (n, c, h, w) = ins[0]
        kernel = _require_weight(node, "kernel")
        bias = _require_weight(node, "bias")
        stride = int(_require_attr(node, "stride"))
        padding = int(_require_attr(node, "padding"))
        if kernel.ndim != 4:
            raise GraphValidationError(f"conv kernel must be rank 4, got {kernel.shape}", node.id)
        if kernel.shape[1] != c:
            raise GraphValidationError(
                f"conv expects {int(kernel.shape[1])} input channels, producer supplies {c}",
                node.id)
        if bias.shape != (kernel.shape[0],):
            raise GraphValidationError(
                f"conv bias shape {bias.shape} does not match Cout {int(kernel.shape[0])}",
                node.id)
        try:
            oh, ow = ops.conv_output_hw(h, w, kernel.shape[2], kernel.shape[3], stride, padding)
        except ops.OpError as e:
            raise GraphValidationError(str(e), node.id) from e
        return (n, int(kernel.shape[0]), oh, ow)
    if k in ("SILU", "DROPOUT_NOOP"):
        return ins[0]
    if k == "ADD":
        if ins[0] != ins[1]:
            raise GraphValidationError(f"add inputs differ: {ins[0]} vs {ins[1]}", node.id)
        return ins[0]
    if k == "CONCAT":
        base = ins[0]
        if len(base) != 4:
            raise GraphValidationError("concat operates on NCHW tensors", node.id)
        total_c = 0
        for s in ins:
            if len(s) != 4 or s[0] != base[0] or s[2:] != base[2:]:
                raise GraphValidationError(f"concat inputs must share N,H,W: {ins}", node.id)
            total_c += s[1]
        return (base[0], total_c, base[2], base[3])
    if k == "SPLIT2":
        s = ins[0]
        which = int(_require_attr(node, "which"))
        if len(s) != 4 or s[1] % 2 != 0:
            raise GraphValidationError(f"split2 needs an even NCHW channel count, got {s}", node.id)
        if which not in (0, 1):
            raise GraphValidationError(f"split2 half selector must be 0 or 1, got {which}", node.id)
        return (s[0], s[1] // 2, s[2], s[3])
    if k == "MAXPOOL":
        (n, c, h, w) = ins[0]
        kernel = int(_require_attr(node, "kernel"))
        stride = int(_require_attr(node, "stride"))
        padding = int(_require_attr(node, "padding"))
        try:
            oh, ow = ops.conv_output_hw(h, w, kernel, kernel, stride, padding)
        except ops.OpError as e:
            raise GraphValidationError(str(e), node.id) from e
        return (n, c, oh, ow)
    if k == "GAP":
        (n, c, _, _) = ins[0]
        return (n, c, 1, 1)
    if k == "LINEAR":
        s = ins[0]
        weight = _require_weight(node, "weight")
        bias = _require_weight(node, "bias")
        if len(s) != 2:
            raise GraphValidationError(f"linear expects a rank-2 input, got {s}", node.id)
        if weight.ndim != 2 or weight.shape[1] != s[1]:
            raise GraphValidationError(
                f"linear expects {int(weight.shape[1]) if weight.ndim == 2 else '?'} "
                f"input features, producer supplies {s[1]}", node.id)
        if bias.shape != (weight.shape[0],):
            raise GraphValidationError(
                f"linear bias shape {bias.shape} does not match out {int(weight.shape[0])}",
                node.id)
        return (s[0], int(weight.shape[0]))
    if k == "FLATTEN":
        s = ins[0]
        if len(s) != 4 or s[2] != 1 or s[3] != 1:
            raise GraphValidationError(f"flatten expects NxCx1x1, got {s}", node.id)
        return (s[0], s[1])
    if k == "SOFTMAX":
        s = ins[0]
        if len(s) != 2:
            raise GraphValidationError(f"softmax expects rank-2 logits, got {s}", node.id)
        return s
    raise GraphValidationError(f"unknown op kind '{k}'", node.id)


def _run_node(node: OpNode, inputs: list[Tensor], use_reference_conv: bool) -> Tensor:
    k = node.kind
    if k == "CONV2D":
        conv = ops.conv2d_reference if use_reference_conv else ops.conv2d
        return conv(inputs[0], node.weights["kernel"], node.weights["bias"],
                    int(node.attrs["stride"]), int(node.attrs["padding"]))
    if k == "SILU":
        return ops.silu(inputs[0])
    if k == "ADD":
        return ops.add(inputs[0], inputs[1])
    if k == "CONCAT":
        return ops.concat(inputs)
    if k == "SPLIT2":
        return ops.split2(inputs[0], int(node.attrs["which"]))
    if k == "MAXPOOL":
        return ops.maxpool(inputs[0], int(node.attrs["kernel"]),
                           int(node.attrs["stride"]), int(node.attrs["padding"]))
    if k == "GAP":
        return ops.global_avg_pool(inputs[0])
    if k == "LINEAR":
        return ops.linear(inputs[0], node.weights["weight"], node.weights["bias"])
    if k == "FLATTEN":
        return ops.flatten(inputs[0])
    if k == "SOFTMAX":
        return ops.softmax_tensor(inputs[0])
    if k == "DROPOUT_NOOP":
        return inputs[0]
    raise ExecutionError(f"unknown op kind '{k}'", node.id)


def execute(model, input_tensor: Tensor, capture: bool = False,
            path: str = "auto") -> tuple[np.ndarray, ExecutionTrace]:
    """Run the model graph on one preprocessed input.

    ``path`` selects the convolution implementation: "auto"/"optimized"
    uses the GEMM path, "reference" forces the direct-loop oracle.
    Returns the class probability vector and an execution trace.
    """
    if path not in ("auto", "optimized", "reference"):
        raise ValueError(f"unknown execution path '{path}'")
    use_reference = path == "reference"

    meta = model.metadata
    expected = (1, meta.input_channels, meta.input_height, meta.input_width)
    input_tensor.require_single_image()
    if input_tensor.shape != expected:
        raise ExecutionError(
            f"input shape {input_tensor.shape} does not match model geometry {expected}")

    nodes: list[OpNode] = model.nodes
    class_count = len(meta.class_names)
    validate_graph(nodes, expected, class_count)

    # Last consumer per node so activations can be dropped early.
    last_use: dict[int, int] = {}
    for node in nodes:
        for ref in node.inputs:
            last_use[ref] = node.id
    final_id = nodes[-1].id
    last_use[final_id] = final_id

    activations: dict[int, Tensor] = {}
    trace = ExecutionTrace(node_outputs={} if capture else None, node_times_us={})
    t_start = time.perf_counter_ns()

    for node in nodes:
        t0 = time.perf_counter_ns()
        if node.kind == "INPUT":
            out = input_tensor
        else:
            ins = [activations[i] for i in node.inputs]
            try:
                # overflow produces inf/nan; the isfinite check below is
                # the guard, so numpy's intermediate warnings are noise
                with np.errstate(over="ignore", invalid="ignore"):
                    out = _run_node(node, ins, use_reference)
            except ops.OpError as e:
                raise ExecutionError(str(e), node.id) from e
        if not np.all(np.isfinite(out.data)):
            raise NonFiniteError("produced a non-finite value", node.id)
        trace.node_times_us[node.id] = (time.perf_counter_ns() - t0) / 1000.0
        activations[node.id] = out
        if capture:
            trace.node_outputs[node.id] = out
        for ref in list(node.inputs):
            if last_use.get(ref) == node.id and ref != final_id:
                activations.pop(ref, None)

    trace.total_us = (time.perf_counter_ns() - t_start) / 1000.0
    probs = activations[final_id].data.reshape(-1)
    if probs.shape[0] != class_count:
        raise ExecutionError(
            f"output length {probs.shape[0]} does not match {class_count} classes", final_id)
    if abs(float(probs.sum()) - 1.0) > 1e-5:
        raise ExecutionError(f"probabilities sum to {float(probs.sum())}, not 1", final_id)
    return probs, trace
