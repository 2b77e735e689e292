"""torch module -> MSLW container conversion.

The module is symbolically traced with torch.fx and each graph node is
mapped onto the engine's operator set. Batch norm never survives the
conversion: a BatchNorm2d whose only consumer position is directly
after a Conv2d is folded into that convolution's kernel and bias (in
float64, stored as float32). Anything outside the supported set is
rejected with an error naming the offending layer, never silently
dropped.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from mpoxscreen.engine import OpNode, validate_graph
from mpoxscreen.model_io import ModelContainer, ModelMetadata, save_model


class ExportError(ValueError):
    """Checkpoint cannot be expressed in the container's operator set."""


@dataclass(frozen=True)
class ExportMeta:
    """Deployment metadata the checkpoint itself does not carry."""

    model_name: str
    class_names: tuple[str, ...]
    input_height: int
    input_width: int
    input_channels: int = 3
    per_channel_mean: tuple[float, ...] = (0.0, 0.0, 0.0)
    per_channel_std: tuple[float, ...] = (1.0, 1.0, 1.0)
    scale: float = 1.0 / 255.0
    resize_policy: str = "shortest_side_center_crop"
    source_fingerprint: str = ""

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ExportMeta":
        try:
            return cls(
                model_name=str(obj["model_name"]),
                class_names=tuple(str(c) for c in obj["class_names"]),
                input_height=int(obj["input_height"]),
                input_width=int(obj["input_width"]),
                input_channels=int(obj.get("input_channels", 3)),
                per_channel_mean=tuple(float(v) for v in obj.get(
                    "per_channel_mean", (0.0, 0.0, 0.0))),
                per_channel_std=tuple(float(v) for v in obj.get(
                    "per_channel_std", (1.0, 1.0, 1.0))),
                scale=float(obj.get("scale", 1.0 / 255.0)),
                resize_policy=str(obj.get("resize_policy",
                                          "shortest_side_center_crop")),
                source_fingerprint=str(obj.get("source_fingerprint", "")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ExportError(f"metadata is missing or malformed: {e}") from e


def trace_module(module: nn.Module) -> torch.fx.GraphModule:
    module = module.eval()
    try:
        return torch.fx.symbolic_trace(module)
    except Exception as e:
        raise ExportError(f"module cannot be traced: {e}") from e


def _f32(t: torch.Tensor) -> np.ndarray:
    return t.detach().to(torch.float64).numpy().astype(np.float32)


def fuse_conv_bn(conv: nn.Conv2d, bn: nn.BatchNorm2d) -> tuple[np.ndarray, np.ndarray]:
    """Fold eval-mode batch norm into the convolution, in float64."""
    w = conv.weight.detach().to(torch.float64).numpy()
    if conv.bias is not None:
        b = conv.bias.detach().to(torch.float64).numpy()
    else:
        b = np.zeros(w.shape[0], dtype=np.float64)
    gamma = (bn.weight.detach().to(torch.float64).numpy()
             if bn.weight is not None else np.ones(w.shape[0]))
    beta = (bn.bias.detach().to(torch.float64).numpy()
            if bn.bias is not None else np.zeros(w.shape[0]))
    mean = bn.running_mean.detach().to(torch.float64).numpy()
    var = bn.running_var.detach().to(torch.float64).numpy()
    s = gamma / np.sqrt(var + bn.eps)
    fused_w = w * s[:, None, None, None]
    fused_b = (b - mean) * s + beta
    return fused_w.astype(np.float32), fused_b.astype(np.float32)


def _pair(value, what: str, node: str) -> int:
    """Normalize an int-or-pair torch argument to one symmetric int."""
    if isinstance(value, (tuple, list)):
        if len(value) != 2 or value[0] != value[1]:
            raise ExportError(f"'{node}': asymmetric {what} {tuple(value)} is unsupported")
        value = value[0]
    return int(value)


@dataclass
class _Builder:
    nodes: list[OpNode] = field(default_factory=list)
    # mslw node id -> fx node name whose torch output equals that node's output
    golden_map: dict[int, str] = field(default_factory=dict)

    def emit(self, fx_name: str, kind: str, inputs: tuple[int, ...] = (),
             attrs: dict | None = None, weights: dict | None = None) -> int:
        node_id = len(self.nodes)
        self.nodes.append(OpNode(node_id, kind, inputs, attrs or {}, weights or {}))
        self.golden_map[node_id] = fx_name
        return node_id


def _conv_attrs(conv: nn.Conv2d, name: str) -> dict:
    if conv.groups != 1:
        raise ExportError(f"'{name}': grouped convolution (groups={conv.groups}) is unsupported")
    if _pair(conv.dilation, "dilation", name) != 1:
        raise ExportError(f"'{name}': dilated convolution is unsupported")
    if conv.padding_mode != "zeros":
        raise ExportError(f"'{name}': padding mode '{conv.padding_mode}' is unsupported")
    stride = _pair(conv.stride, "stride", name)
    if stride not in (1, 2):
        raise ExportError(f"'{name}': convolution stride {stride} is outside {{1, 2}}")
    padding = _pair(conv.padding, "padding", name)
    return {"stride": stride, "padding": padding}


def convert(module: nn.Module, meta: ExportMeta) -> tuple[ModelContainer, dict[int, str]]:
    """Convert an eval-mode module. Returns (container, golden map).

    The golden map gives, for every container node id, the fx node name
    whose output in the original (unfused) module equals that container
    node's output; golden emission captures activations through it.
    """
    gm = trace_module(module)
    fx_nodes = list(gm.graph.nodes)

    # Conv2d -> BatchNorm2d pairs where the conv output has no other
    # consumer get fused into one CONV2D.
    modules = dict(gm.named_modules())
    fused_into: dict[str, torch.fx.Node] = {}  # conv fx name -> bn fx node
    for node in fx_nodes:
        if node.op != "call_module" or not isinstance(
                modules.get(node.target), nn.BatchNorm2d):
            continue
        src = node.args[0]
        if (isinstance(src, torch.fx.Node) and src.op == "call_module"
                and isinstance(modules.get(src.target), nn.Conv2d)
                and len(src.users) == 1):
            fused_into[src.name] = node

    b = _Builder()
    resolved: dict[str, int] = {}   # fx node name -> mslw node id
    chunk_nodes: dict[str, int] = {}  # fx chunk node name -> its input mslw id
    pending_conv: dict[str, torch.fx.Node] = {}  # awaiting the fusing bn

    def resolve(arg) -> int:
        if not isinstance(arg, torch.fx.Node):
            raise ExportError(f"expected a tensor argument, got {arg!r}")
        if arg.name in chunk_nodes:
            raise ExportError(
                f"'{arg.name}': chunk result used directly; index it with [0] or [1]")
        if arg.name in pending_conv:
            raise ExportError(
                f"'{arg.name}': convolution output consumed both raw and through batch norm")
        if arg.name not in resolved:
            raise ExportError(f"'{arg.name}': unsupported value feeding the graph")
        return resolved[arg.name]

    def kwarg(node, name, pos, default=None):
        if name in node.kwargs:
            return node.kwargs[name]
        if len(node.args) > pos:
            return node.args[pos]
        return default

    for node in fx_nodes:
        if node.op == "placeholder":
            if any(n.kind == "INPUT" for n in b.nodes):
                raise ExportError("module must take exactly one input tensor")
            resolved[node.name] = b.emit(node.name, "INPUT")

        elif node.op == "output":
            out = node.args[0]
            if isinstance(out, (tuple, list)):
                raise ExportError("module must return one tensor, not a tuple")
            out_id = resolve(out)
            if out_id != len(b.nodes) - 1 or b.nodes[out_id].kind != "SOFTMAX":
                raise ExportError("module output must be the final softmax")

        elif node.op == "call_module":
            sub = modules.get(node.target)
            name = str(node.target)
            if isinstance(sub, nn.Conv2d):
                if node.name in fused_into:
                    pending_conv[node.name] = node
                    continue
                attrs = _conv_attrs(sub, name)
                bias = (_f32(sub.bias) if sub.bias is not None
                        else np.zeros(sub.out_channels, dtype=np.float32))
                resolved[node.name] = b.emit(
                    node.name, "CONV2D", (resolve(node.args[0]),), attrs,
                    {"kernel": _f32(sub.weight), "bias": bias})
            elif isinstance(sub, nn.BatchNorm2d):
                src = node.args[0]
                if not (isinstance(src, torch.fx.Node) and src.name in pending_conv):
                    if isinstance(src, torch.fx.Node) and src.name in resolved \
                            and b.nodes[resolved[src.name]].kind == "CONV2D":
                        raise ExportError(
                            f"'{name}': convolution output is shared, batch norm cannot fuse")
                    raise ExportError(
                        f"'{name}': batch norm not directly after a convolution")
                conv_node = pending_conv.pop(src.name)
                conv = modules[conv_node.target]
                attrs = _conv_attrs(conv, str(conv_node.target))
                kernel, bias = fuse_conv_bn(conv, sub)
                resolved[node.name] = b.emit(
                    node.name, "CONV2D", (resolve(conv_node.args[0]),), attrs,
                    {"kernel": kernel, "bias": bias})
            elif isinstance(sub, nn.SiLU):
                resolved[node.name] = b.emit(node.name, "SILU", (resolve(node.args[0]),))
            elif isinstance(sub, nn.MaxPool2d):
                if _pair(sub.dilation, "dilation", name) != 1 or sub.ceil_mode:
                    raise ExportError(f"'{name}': dilation or ceil_mode pooling is unsupported")
                kernel = _pair(sub.kernel_size, "kernel", name)
                stride = _pair(sub.stride if sub.stride is not None
                               else sub.kernel_size, "stride", name)
                padding = _pair(sub.padding, "padding", name)
                resolved[node.name] = b.emit(
                    node.name, "MAXPOOL", (resolve(node.args[0]),),
                    {"kernel": kernel, "stride": stride, "padding": padding})
            elif isinstance(sub, nn.AdaptiveAvgPool2d):
                if _pair(sub.output_size, "output size", name) != 1:
                    raise ExportError(
                        f"'{name}': adaptive pooling only supported to 1x1 (global average)")
                resolved[node.name] = b.emit(node.name, "GAP", (resolve(node.args[0]),))
            elif isinstance(sub, nn.Linear):
                bias = (_f32(sub.bias) if sub.bias is not None
                        else np.zeros(sub.out_features, dtype=np.float32))
                resolved[node.name] = b.emit(
                    node.name, "LINEAR", (resolve(node.args[0]),), {},
                    {"weight": _f32(sub.weight), "bias": bias})
            elif isinstance(sub, nn.Softmax):
                if sub.dim not in (1, -1):
                    raise ExportError(f"'{name}': softmax over dim {sub.dim} is unsupported")
                resolved[node.name] = b.emit(node.name, "SOFTMAX", (resolve(node.args[0]),))
            elif isinstance(sub, nn.Dropout):
                resolved[node.name] = b.emit(
                    node.name, "DROPOUT_NOOP", (resolve(node.args[0]),))
            elif isinstance(sub, nn.Flatten):
                if sub.start_dim != 1 or sub.end_dim != -1:
                    raise ExportError(f"'{name}': partial flatten is unsupported")
                resolved[node.name] = b.emit(node.name, "FLATTEN", (resolve(node.args[0]),))
            elif isinstance(sub, nn.Identity):
                resolved[node.name] = resolve(node.args[0])
            else:
                raise ExportError(
                    f"unsupported layer '{name}' of type {type(sub).__name__}")

        elif node.op == "call_function":
            fn = node.target
            if fn in (operator.add, torch.add):
                resolved[node.name] = b.emit(
                    node.name, "ADD", (resolve(node.args[0]), resolve(node.args[1])))
            elif fn is torch.cat:
                if _pair(kwarg(node, "dim", 1, 0), "dim", node.name) != 1:
                    raise ExportError(f"'{node.name}': concat only supported on channels")
                parts = tuple(resolve(a) for a in node.args[0])
                resolved[node.name] = b.emit(node.name, "CONCAT", parts)
            elif fn is torch.chunk:
                chunks = _pair(kwarg(node, "chunks", 1), "chunks", node.name)
                dim = _pair(kwarg(node, "dim", 2, 0), "dim", node.name)
                if chunks != 2 or dim != 1:
                    raise ExportError(
                        f"'{node.name}': only a two-way channel chunk is supported")
                chunk_nodes[node.name] = resolve(node.args[0])
            elif fn is operator.getitem:
                src, index = node.args
                if not (isinstance(src, torch.fx.Node) and src.name in chunk_nodes):
                    raise ExportError(f"'{node.name}': indexing is only supported on chunk results")
                if index not in (0, 1):
                    raise ExportError(f"'{node.name}': chunk index {index} out of range")
                resolved[node.name] = b.emit(
                    node.name, "SPLIT2", (chunk_nodes[src.name],), {"which": int(index)})
            elif fn is torch.flatten:
                if _pair(kwarg(node, "start_dim", 1, 0), "start_dim", node.name) != 1:
                    raise ExportError(f"'{node.name}': partial flatten is unsupported")
                resolved[node.name] = b.emit(node.name, "FLATTEN", (resolve(node.args[0]),))
            elif fn is F.silu:
                resolved[node.name] = b.emit(node.name, "SILU", (resolve(node.args[0]),))
            elif fn is F.softmax:
                if kwarg(node, "dim", 1) not in (1, -1):
                    raise ExportError(f"'{node.name}': softmax dim must be the class axis")
                resolved[node.name] = b.emit(node.name, "SOFTMAX", (resolve(node.args[0]),))
            elif fn is F.dropout:
                if kwarg(node, "training", 2, False):
                    raise ExportError(f"'{node.name}': dropout traced in training mode")
                resolved[node.name] = b.emit(
                    node.name, "DROPOUT_NOOP", (resolve(node.args[0]),))
            elif fn is F.max_pool2d:
                kernel = _pair(kwarg(node, "kernel_size", 1), "kernel", node.name)
                stride_arg = kwarg(node, "stride", 2)
                stride = kernel if stride_arg is None else _pair(stride_arg, "stride", node.name)
                padding = _pair(kwarg(node, "padding", 3, 0), "padding", node.name)
                resolved[node.name] = b.emit(
                    node.name, "MAXPOOL", (resolve(node.args[0]),),
                    {"kernel": kernel, "stride": stride, "padding": padding})
            elif fn is F.adaptive_avg_pool2d:
                if _pair(kwarg(node, "output_size", 1), "output size", node.name) != 1:
                    raise ExportError(f"'{node.name}': adaptive pooling only supported to 1x1")
                resolved[node.name] = b.emit(node.name, "GAP", (resolve(node.args[0]),))
            else:
                fname = getattr(fn, "__name__", str(fn))
                raise ExportError(f"unsupported function '{fname}' in the forward pass")

        elif node.op == "call_method":
            if node.target == "chunk":
                chunks = _pair(kwarg(node, "chunks", 1), "chunks", node.name)
                dim = _pair(kwarg(node, "dim", 2, 0), "dim", node.name)
                if chunks != 2 or dim != 1:
                    raise ExportError(
                        f"'{node.name}': only a two-way channel chunk is supported")
                chunk_nodes[node.name] = resolve(node.args[0])
            elif node.target == "flatten":
                if _pair(kwarg(node, "start_dim", 1, 0), "start_dim", node.name) != 1:
                    raise ExportError(f"'{node.name}': partial flatten is unsupported")
                resolved[node.name] = b.emit(node.name, "FLATTEN", (resolve(node.args[0]),))
            elif node.target == "add":
                resolved[node.name] = b.emit(
                    node.name, "ADD", (resolve(node.args[0]), resolve(node.args[1])))
            elif node.target == "softmax":
                if kwarg(node, "dim", 1) not in (1, -1):
                    raise ExportError(f"'{node.name}': softmax dim must be the class axis")
                resolved[node.name] = b.emit(node.name, "SOFTMAX", (resolve(node.args[0]),))
            else:
                raise ExportError(f"unsupported method '.{node.target}()' in the forward pass")

        elif node.op == "get_attr":
            raise ExportError(
                f"'{node.target}': raw parameter access is unsupported; use standard layers")
        else:
            raise ExportError(f"unsupported graph construct '{node.op}'")

    if pending_conv:
        leftover = next(iter(pending_conv))
        raise ExportError(f"'{leftover}': convolution marked for fusion was never consumed")

    param_count = sum(int(w.size) for n in b.nodes for w in n.weights.values())
    metadata = ModelMetadata(
        model_name=meta.model_name,
        class_names=meta.class_names,
        input_height=meta.input_height,
        input_width=meta.input_width,
        input_channels=meta.input_channels,
        per_channel_mean=meta.per_channel_mean,
        per_channel_std=meta.per_channel_std,
        param_count=param_count,
        resize_policy=meta.resize_policy,
        scale=meta.scale,
        source_fingerprint=meta.source_fingerprint,
    )
    try:
        validate_graph(b.nodes, metadata.input_shape, len(meta.class_names))
    except ValueError as e:
        raise ExportError(f"converted graph is invalid: {e}") from e
    return ModelContainer(metadata=metadata, nodes=b.nodes), b.golden_map


def export(module: nn.Module, out_path: str | Path, meta: ExportMeta) -> ModelContainer:
    container, _ = convert(module, meta)
    save_model(container, out_path)
    return container
