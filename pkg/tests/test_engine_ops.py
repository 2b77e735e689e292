"""Operator kernel tests: hand-computed oracles, dual-path agreement,
and error contracts."""

from __future__ import annotations

import math

import numpy as np
import pytest

from mpoxscreen.engine import Tensor, TensorError, ShapeMismatch
from mpoxscreen.engine import ops


def t4(arr) -> Tensor:
    return Tensor.from_array(np.asarray(arr, dtype=np.float32))


def brute_conv(x, k, b, stride, padding):
    """Independent conv oracle: quadruple loops, plain python sums."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.zeros((cin, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    xp[:, padding:padding + h, padding:padding + w] = x[0]
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((1, cout, oh, ow), dtype=np.float64)
    for o in range(cout):
        for i in range(oh):
            for j in range(ow):
                acc = float(b[o])
                for c in range(cin):
                    for a in range(kh):
                        for d in range(kw):
                            acc += float(xp[c, i * stride + a, j * stride + d]) * \
                                   float(k[o, c, a, d])
                out[0, o, i, j] = acc
    return out.astype(np.float32)


# ---------------------------------------------------------------------------
# Tensor container
# ---------------------------------------------------------------------------

def test_tensor_rejects_bad_dtype_and_rank():
    with pytest.raises(TensorError):
        Tensor(np.zeros((2, 2), dtype=np.float64))
    with pytest.raises(TensorError):
        Tensor.from_array(np.zeros((3,), dtype=np.float32))
    with pytest.raises(TensorError):
        Tensor.from_array(np.zeros((1, 0, 2, 2), dtype=np.float32))


def test_tensor_makes_contiguous():
    base = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
    view = base[:, :, ::2, ::2]
    t = Tensor.from_array(np.ascontiguousarray(view))
    assert t.data.flags["C_CONTIGUOUS"]


# ---------------------------------------------------------------------------
# Convolution: hand oracles
# ---------------------------------------------------------------------------

def test_conv_1x1_kernel_hand_values():
    x = t4([[[[1, 2], [3, 4]]]])
    k = np.array([[[[2.0]]]], dtype=np.float32)
    b = np.array([0.5], dtype=np.float32)
    out = ops.conv2d(x, k, b, stride=1, padding=0)
    assert np.array_equal(out.data, np.array([[[[2.5, 4.5], [6.5, 8.5]]]],
                                             dtype=np.float32))


def test_conv_zero_padding_hand_values():
    x = t4(np.ones((1, 1, 2, 2)))
    k = np.ones((1, 1, 3, 3), dtype=np.float32)
    b = np.zeros(1, dtype=np.float32)
    out = ops.conv2d(x, k, b, stride=1, padding=1)
    # every 3x3 window sees exactly the four in-frame ones
    assert np.array_equal(out.data, np.full((1, 1, 2, 2), 4.0, dtype=np.float32))


def test_conv_stride2_picks_expected_positions():
    x = t4(np.arange(16).reshape(1, 1, 4, 4))
    k = np.array([[[[1.0]]]], dtype=np.float32)
    b = np.zeros(1, dtype=np.float32)
    out = ops.conv2d(x, k, b, stride=2, padding=0)
    assert np.array_equal(out.data[0, 0], np.array([[0, 2], [8, 10]],
                                                   dtype=np.float32))


def test_conv_multi_channel_against_brute_force():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 3, 6, 5)).astype(np.float32)
    k = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
    b = rng.normal(size=(4,)).astype(np.float32)
    expected = brute_conv(x, k, b, stride=1, padding=1)
    for conv in (ops.conv2d, ops.conv2d_reference):
        got = conv(Tensor.from_array(x), k, b, 1, 1).data
        np.testing.assert_allclose(got, expected, rtol=1e-6, atol=1e-6)


def test_conv_dual_path_agreement_random_shapes():
    rng = np.random.default_rng(42)
    for _ in range(30):
        cin = int(rng.integers(1, 5))
        cout = int(rng.integers(1, 6))
        kh = int(rng.choice([1, 3, 5]))
        stride = int(rng.choice([1, 2]))
        padding = int(rng.integers(0, 3))
        h = int(rng.integers(kh, kh + 9))
        w = int(rng.integers(kh, kh + 9))
        x = Tensor.from_array(rng.normal(size=(1, cin, h, w)).astype(np.float32))
        k = rng.normal(size=(cout, cin, kh, kh)).astype(np.float32)
        b = rng.normal(size=(cout,)).astype(np.float32)
        ref = ops.conv2d_reference(x, k, b, stride, padding).data
        opt = ops.conv2d(x, k, b, stride, padding).data
        np.testing.assert_allclose(opt, ref, rtol=1e-5, atol=1e-6)


def test_conv_error_contracts():
    x = t4(np.zeros((1, 3, 8, 8)))
    k = np.zeros((4, 2, 3, 3), dtype=np.float32)  # wrong cin
    b = np.zeros(4, dtype=np.float32)
    with pytest.raises(ShapeMismatch) as ei:
        ops.conv2d(x, k, b, 1, 1)
    assert ei.value.expected == 2 and ei.value.actual == 3

    k_ok = np.zeros((4, 3, 3, 3), dtype=np.float32)
    with pytest.raises(ops.OpError):
        ops.conv2d(x, k_ok, np.zeros(5, dtype=np.float32), 1, 1)
    with pytest.raises(ops.OpError):
        ops.conv2d(x, k_ok, b, stride=3, padding=0)
    with pytest.raises(ops.OpError):
        ops.conv2d(x, k_ok, b, stride=1, padding=-1)
    with pytest.raises(ops.OpError):  # kernel larger than padded input
        ops.conv2d(t4(np.zeros((1, 1, 2, 2))), np.zeros((1, 1, 5, 5), np.float32),
                   np.zeros(1, np.float32), 1, 0)


def test_conv_output_hw_formula():
    assert ops.conv_output_hw(224, 224, 3, 3, 2, 1) == (112, 112)
    assert ops.conv_output_hw(7, 7, 1, 1, 1, 0) == (7, 7)
    assert ops.conv_output_hw(5, 5, 3, 3, 2, 0) == (2, 2)


# ---------------------------------------------------------------------------
# Elementwise / structural ops
# ---------------------------------------------------------------------------

def test_silu_known_values():
    x = t4(np.array([[0.0, 1.0, -1.0, 20.0]], dtype=np.float32).reshape(1, 4))
    out = ops.silu(x).data.reshape(-1)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    expected = [0.0, 1.0 * sig(1.0), -1.0 * sig(-1.0), 20.0 * sig(20.0)]
    np.testing.assert_allclose(out, np.array(expected, dtype=np.float32),
                               rtol=1e-6, atol=1e-7)


def test_add_and_shape_error():
    a = t4(np.ones((1, 2, 2, 2)))
    b = t4(np.full((1, 2, 2, 2), 2.0))
    assert np.array_equal(ops.add(a, b).data, np.full((1, 2, 2, 2), 3.0, np.float32))
    with pytest.raises(ops.OpError):
        ops.add(a, t4(np.ones((1, 2, 2, 3))))


def test_concat_channel_order_and_errors():
    a = t4(np.full((1, 1, 2, 2), 1.0))
    b = t4(np.full((1, 2, 2, 2), 2.0))
    out = ops.concat([a, b])
    assert out.shape == (1, 3, 2, 2)
    assert np.array_equal(out.data[0, 0], np.ones((2, 2), np.float32))
    assert np.array_equal(out.data[0, 1:], np.full((2, 2, 2), 2.0, np.float32))
    with pytest.raises(ops.OpError):
        ops.concat([a])
    with pytest.raises(ops.OpError):
        ops.concat([a, t4(np.ones((1, 1, 3, 2)))])


def test_split_concat_roundtrip_identity():
    rng = np.random.default_rng(9)
    x = Tensor.from_array(rng.normal(size=(1, 6, 4, 5)).astype(np.float32))
    lo = ops.split2(x, 0)
    hi = ops.split2(x, 1)
    assert lo.shape == hi.shape == (1, 3, 4, 5)
    back = ops.concat([lo, hi])
    assert np.array_equal(back.data, x.data)


def test_split_rejects_odd_channels_and_bad_half():
    x = t4(np.zeros((1, 3, 2, 2)))
    with pytest.raises(ops.OpError):
        ops.split2(x, 0)
    with pytest.raises(ops.OpError):
        ops.split2(t4(np.zeros((1, 4, 2, 2))), 2)


def test_maxpool_hand_values_and_neginf_padding():
    x = t4([[[[1, 2], [3, 4]]]])
    out = ops.maxpool(x, kernel=2, stride=1, padding=0)
    assert np.array_equal(out.data, np.array([[[[4.0]]]], dtype=np.float32))
    # padding must never win: all values negative, pad is -inf not 0
    xneg = t4(np.full((1, 1, 2, 2), -5.0))
    out = ops.maxpool(xneg, kernel=3, stride=1, padding=1)
    assert np.array_equal(out.data, np.full((1, 1, 2, 2), -5.0, np.float32))


def test_maxpool_stride_geometry():
    x = t4(np.arange(36, dtype=np.float32).reshape(1, 1, 6, 6))
    out = ops.maxpool(x, kernel=2, stride=2, padding=0)
    assert out.shape == (1, 1, 3, 3)
    assert np.array_equal(out.data[0, 0],
                          np.array([[7, 9, 11], [19, 21, 23], [31, 33, 35]],
                                   dtype=np.float32))


def test_gap_is_mean():
    x = t4(np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2))
    out = ops.global_avg_pool(x)
    assert out.shape == (1, 2, 1, 1)
    np.testing.assert_allclose(out.data.reshape(-1), [1.5, 5.5], rtol=0, atol=0)


def test_linear_hand_values_and_errors():
    x = Tensor.from_array(np.array([[1.0, 2.0]], dtype=np.float32))
    w = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], dtype=np.float32)
    b = np.array([0.0, 10.0, -1.0], dtype=np.float32)
    out = ops.linear(x, w, b)
    assert np.array_equal(out.data, np.array([[1.0, 12.0, 2.0]], dtype=np.float32))
    with pytest.raises(ops.OpError):
        ops.linear(x, np.zeros((3, 5), np.float32), np.zeros(3, np.float32))


def test_flatten_contract():
    x = t4(np.arange(4, dtype=np.float32).reshape(1, 4, 1, 1))
    out = ops.flatten(x)
    assert out.shape == (1, 4)
    with pytest.raises(ops.OpError):
        ops.flatten(t4(np.zeros((1, 4, 2, 1))))


# ---------------------------------------------------------------------------
# Softmax
# ---------------------------------------------------------------------------

def test_softmax_uniform_and_hand_values():
    out = ops.softmax(np.zeros((1, 3), dtype=np.float32))
    np.testing.assert_allclose(out.reshape(-1), np.full(3, 1 / 3), rtol=1e-7)

    logits = np.array([[1.0, 2.0, 3.0]], dtype=np.float32)
    e = np.exp(np.array([1.0, 2.0, 3.0]) - 3.0)
    np.testing.assert_allclose(ops.softmax(logits).reshape(-1), e / e.sum(),
                               rtol=1e-6)


def test_softmax_shift_invariance_and_overflow_safety():
    rng = np.random.default_rng(17)
    v = rng.normal(size=(1, 3)).astype(np.float32)
    shifted = (v.astype(np.float64) + 1000.0).astype(np.float32)
    a = ops.softmax(v)
    b = ops.softmax(shifted)
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-7)

    big = np.array([[4000.0, 0.0, -4000.0]], dtype=np.float32)
    out = ops.softmax(big)
    assert np.isfinite(out).all() and abs(out.sum() - 1.0) < 1e-6


def test_softmax_rejects_nonfinite():
    with pytest.raises(ops.OpError):
        ops.softmax(np.array([[np.nan, 0.0]], dtype=np.float32))
    with pytest.raises(ops.OpError):
        ops.softmax(np.array([[np.inf, 0.0]], dtype=np.float32))
