"""Operator kernels for the classifier graph.

Convolution ships with two implementations that must agree:

* ``conv2d_reference`` walks output positions and takes direct patch dot
  products. It is the numerical oracle and stays naive on purpose.
* ``conv2d`` restructures the input into a patch matrix (im2col) and runs
  one GEMM. This is the production path.

All reductions (conv, linear, global average pool) accumulate in float64
and store back to float32.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class OpError(ValueError):
    pass


class ShapeMismatch(OpError):
    def __init__(self, message: str, expected=None, actual=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatch(
            f"kernel {kh}x{kw} with stride {stride}, padding {padding} "
            f"does not fit a {h}x{w} input"
        )
    return oh, ow


def _check_conv_args(x: Tensor, kernel: np.ndarray, bias: np.ndarray, stride: int, padding: int):
    x.require_single_image()
    if kernel.ndim != 4:
        raise ShapeMismatch(f"conv kernel must be rank 4 [Cout,Cin,Kh,Kw], got {kernel.shape}")
    cin = x.data.shape[1]
    if kernel.shape[1] != cin:
        raise ShapeMismatch(
            f"conv kernel expects {kernel.shape[1]} input channels, input has {cin}",
            expected=int(kernel.shape[1]),
            actual=int(cin),
        )
    if bias.ndim != 1 or bias.shape[0] != kernel.shape[0]:
        raise ShapeMismatch(
            f"conv bias length {bias.shape} does not match Cout {kernel.shape[0]}"
        )
    if stride not in (1, 2):
        raise OpError(f"conv stride must be 1 or 2, got {stride}")
    if padding < 0:
        raise OpError(f"conv padding must be >= 0, got {padding}")


def _pad_input(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_reference(x: Tensor, kernel: np.ndarray, bias: np.ndarray,
                     stride: int, padding: int) -> Tensor:
    """Direct-loop cross-correlation, the equivalence oracle."""
    _check_conv_args(x, kernel, bias, stride, padding)
    _, cin, h, w = x.data.shape
    cout, _, kh, kw = kernel.shape
    oh, ow = conv_output_hw(h, w, kh, kw, stride, padding)

    xp = _pad_input(x.data, padding).astype(np.float64)
    k64 = kernel.astype(np.float64)
    b64 = bias.astype(np.float64)
    out = np.empty((1, cout, oh, ow), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            patch = xp[0, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
            out[0, :, i, j] = np.einsum("cij,ocij->o", patch, k64) + b64
    return Tensor(out.astype(np.float32))


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int,
            oh: int, ow: int) -> np.ndarray:
    """(1,C,H,W) -> (C*Kh*Kw, OH*OW) float64 patch matrix."""
    xp = _pad_input(x, padding)
    _, c, hp, wp = xp.shape
    sN, sC, sH, sW = xp.strides
    # Window view: (C, Kh, Kw, OH, OW), no copy until reshape.
    windows = np.lib.stride_tricks.as_strided(
        xp[0],
        shape=(c, kh, kw, oh, ow),
        strides=(sC, sH, sW, sH * stride, sW * stride),
        writeable=False,
    )
    return windows.reshape(c * kh * kw, oh * ow).astype(np.float64)


def conv2d(x: Tensor, kernel: np.ndarray, bias: np.ndarray,
           stride: int, padding: int) -> Tensor:
    """Patch-matrix/GEMM convolution, the optimized path."""
    _check_conv_args(x, kernel, bias, stride, padding)
    _, cin, h, w = x.data.shape
    cout, _, kh, kw = kernel.shape
    oh, ow = conv_output_hw(h, w, kh, kw, stride, padding)

    cols = _im2col(x.data, kh, kw, stride, padding, oh, ow)
    kmat = kernel.reshape(cout, cin * kh * kw).astype(np.float64)
    out = kmat @ cols + bias.astype(np.float64)[:, None]
    return Tensor(out.reshape(1, cout, oh, ow).astype(np.float32))


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x), elementwise."""
    v = x.data.astype(np.float64)
    out = v / (1.0 + np.exp(-v))
    return Tensor(out.astype(np.float32))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add requires equal shapes, got {a.shape} and {b.shape}")
    return Tensor(a.data + b.data)


def concat(parts: list[Tensor]) -> Tensor:
    if len(parts) < 2:
        raise OpError("concat requires at least two inputs")
    first = parts[0]
    for p in parts[1:]:
        if p.data.ndim != 4 or first.data.ndim != 4:
            raise ShapeMismatch("concat operates on NCHW tensors")
        if p.shape[0] != first.shape[0] or p.shape[2:] != first.shape[2:]:
            raise ShapeMismatch(
                f"concat inputs must share N,H,W: {first.shape} vs {p.shape}"
            )
    return Tensor(np.concatenate([p.data for p in parts], axis=1))


def split2(x: Tensor, which: int) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeMismatch("split2 operates on NCHW tensors")
    c = x.shape[1]
    if c % 2 != 0:
        raise ShapeMismatch(f"split2 requires an even channel count, got {c}")
    if which not in (0, 1):
        raise OpError(f"split2 half selector must be 0 or 1, got {which}")
    half = c // 2
    sl = x.data[:, :half] if which == 0 else x.data[:, half:]
    return Tensor(np.ascontiguousarray(sl))


def maxpool(x: Tensor, kernel: int, stride: int, padding: int) -> Tensor:
    """Window max; padded cells are -inf so they never win."""
    if x.data.ndim != 4:
        raise ShapeMismatch("maxpool operates on NCHW tensors")
    _, c, h, w = x.data.shape
    oh, ow = conv_output_hw(h, w, kernel, kernel, stride, padding)
    if padding == 0:
        xp = x.data
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                    constant_values=-np.inf)
    sN, sC, sH, sW = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp[0],
        shape=(c, oh, ow, kernel, kernel),
        strides=(sC, sH * stride, sW * stride, sH, sW),
        writeable=False,
    )
    out = windows.max(axis=(3, 4))[None]
    return Tensor(np.ascontiguousarray(out))


def global_avg_pool(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeMismatch("global_avg_pool operates on NCHW tensors")
    out = x.data.mean(axis=(2, 3), dtype=np.float64, keepdims=True)
    return Tensor(out.astype(np.float32))


def linear(x: Tensor, weight: np.ndarray, bias: np.ndarray) -> Tensor:
    """x @ weight.T + bias for rank-2 x of shape (N, in)."""
    if x.data.ndim != 2:
        raise ShapeMismatch(f"linear expects a rank-2 input, got shape {x.shape}")
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ShapeMismatch(
            f"linear weight expects {weight.shape[1] if weight.ndim == 2 else '?'} "
            f"input features, input has {x.shape[1]}",
            expected=int(weight.shape[1]) if weight.ndim == 2 else None,
            actual=int(x.shape[1]),
        )
    if bias.ndim != 1 or bias.shape[0] != weight.shape[0]:
        raise ShapeMismatch(f"linear bias length {bias.shape} does not match out {weight.shape[0]}")
    out = x.data.astype(np.float64) @ weight.astype(np.float64).T + bias.astype(np.float64)
    return Tensor(out.astype(np.float32))


def flatten(x: Tensor) -> Tensor:
    if x.data.ndim != 4 or x.shape[2] != 1 or x.shape[3] != 1:
        raise ShapeMismatch(f"flatten expects NxCx1x1, got {x.shape}")
    return Tensor(np.ascontiguousarray(x.data.reshape(x.shape[0], x.shape[1])))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax over the last axis, float64 internally."""
    v = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise OpError("softmax requires finite logits")
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def softmax_tensor(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeMismatch(f"softmax node expects rank-2 logits, got shape {x.shape}")
    return Tensor(softmax(x.data))
