"""Conversion: operator mapping, metadata, envelope, and rejections."""

import numpy as np
import pytest
import torch
import torch.nn as nn
import torch.nn.functional as F

from mpoxscreen.engine import Tensor, execute
from mpoxscreen.model_io import load_model, validate_envelope

from msl_exporter import ExportError, ExportMeta, convert, export
from util_torch import (
    CLASSES,
    DetectionHead,
    make_nano,
    make_plain,
    make_tiny,
    meta_for,
    seed_all,
)

# TinyNet covers every operator once; the converted graph must land on
# this exact node sequence (ids, kinds, wiring).
TINY_GRAPH = [
    (0, "INPUT", ()),
    (1, "CONV2D", (0,)),       # stem conv with bn fused in
    (2, "SILU", (1,)),
    (3, "SPLIT2", (2,)),
    (4, "SPLIT2", (2,)),
    (5, "CONV2D", (3,)),
    (6, "SILU", (5,)),
    (7, "ADD", (6, 4)),
    (8, "CONCAT", (7, 3)),
    (9, "MAXPOOL", (8,)),
    (10, "CONV2D", (9,)),
    (11, "SILU", (10,)),
    (12, "GAP", (11,)),
    (13, "DROPOUT_NOOP", (12,)),
    (14, "FLATTEN", (13,)),
    (15, "LINEAR", (14,)),
    (16, "SOFTMAX", (15,)),
]


def test_tiny_graph_structure():
    container, golden_map = convert(make_tiny(), meta_for("tiny"))
    got = [(n.id, n.kind, n.inputs) for n in container.nodes]
    assert got == TINY_GRAPH
    assert container.nodes[3].attrs["which"] == 0
    assert container.nodes[4].attrs["which"] == 1
    assert container.nodes[1].attrs == {"stride": 2, "padding": 1}
    assert container.nodes[9].attrs == {"kernel": 2, "stride": 2, "padding": 0}
    assert sorted(golden_map) == [n.id for n in container.nodes]


def test_tiny_param_count_and_metadata():
    container, _ = convert(make_tiny(), meta_for("tiny", fingerprint="fp-1"))
    # stem 3*8*9 + fused bias 8, branch 4*4*9+4, head 8*16*9+16, fc 16*3+3
    assert container.metadata.param_count == 1591
    assert container.metadata.class_names == CLASSES
    assert container.metadata.input_height == 32
    assert container.metadata.source_fingerprint == "fp-1"
    assert container.metadata.scale == pytest.approx(1.0 / 255.0)


def test_export_round_trips_through_load(tmp_path):
    out = tmp_path / "tiny.mslw"
    exported = export(make_tiny(), out, meta_for("tiny"))
    assert out.stat().st_size <= 100_000
    loaded = load_model(out)
    assert [n.kind for n in loaded.nodes] == [k for _, k, _ in TINY_GRAPH]
    assert loaded.metadata.param_count == exported.metadata.param_count
    assert loaded.sha256() == exported.sha256()
    report = validate_envelope(loaded)
    assert not report.conforming  # 1,591 params is far below deployment scale
    assert report.size_conforming


def test_exported_probabilities_match_torch():
    net = make_tiny()
    container, _ = convert(net, meta_for("tiny"))
    rng = np.random.default_rng(5)
    x = rng.uniform(-1.5, 1.5, size=(1, 3, 32, 32)).astype(np.float32)
    with torch.no_grad():
        want = net(torch.from_numpy(x)).numpy().reshape(-1)
    got, _ = execute(container, Tensor(x))
    assert np.max(np.abs(got - want)) <= 1e-5


def test_plain_net_without_bn():
    container, _ = convert(make_plain(), meta_for("plain"))
    kinds = [n.kind for n in container.nodes]
    assert kinds == ["INPUT", "CONV2D", "SILU", "CONV2D", "SILU",
                     "GAP", "FLATTEN", "LINEAR", "SOFTMAX"]


def test_biasless_conv_gets_zero_bias():
    seed_all(3)
    net = nn.Sequential(
        nn.Conv2d(3, 4, 3, padding=1, bias=False),
        nn.SiLU(),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(4, 3),
        nn.Softmax(dim=1),
    ).eval()
    container, _ = convert(net, meta_for("biasless", side=8))
    conv = container.nodes[1]
    assert conv.kind == "CONV2D"
    assert np.all(conv.weights["bias"] == 0.0)
    assert conv.weights["bias"].shape == (4,)


def test_nano_envelope_conforms(tmp_path):
    out = tmp_path / "nano.mslw"
    container = export(make_nano(), out, meta_for("nano", side=224))
    report = validate_envelope(load_model(out))
    assert report.conforming, report.messages
    assert 1_000_000 <= container.metadata.param_count <= 2_000_000
    # every batch norm fused away: only engine ops remain, convs carry bias
    kinds = {n.kind for n in container.nodes}
    assert kinds <= {"INPUT", "CONV2D", "SILU", "GAP", "FLATTEN",
                     "LINEAR", "SOFTMAX"}
    convs = [n for n in container.nodes if n.kind == "CONV2D"]
    assert len(convs) == 6
    assert all("bias" in n.weights for n in convs)


def test_nano_probabilities_match_torch():
    net = make_nano()
    container, _ = convert(net, meta_for("nano", side=224))
    rng = np.random.default_rng(9)
    x = rng.uniform(-1.0, 1.0, size=(1, 3, 224, 224)).astype(np.float32)
    with torch.no_grad():
        want = net(torch.from_numpy(x)).numpy().reshape(-1)
    got, _ = execute(container, Tensor(x))
    assert np.max(np.abs(got - want)) <= 1e-4


# ---------------------------------------------------------------------------
# Rejections: anything outside the operator set names the offending layer.
# ---------------------------------------------------------------------------

def test_detection_variant_rejected():
    with pytest.raises(ExportError, match="Upsample"):
        convert(DetectionHead().eval(), meta_for("det"))


def test_grouped_conv_rejected():
    net = nn.Sequential(
        nn.Conv2d(4, 4, 3, padding=1, groups=2),
        nn.Flatten(),
        nn.Linear(4 * 8 * 8, 3),
        nn.Softmax(dim=1),
    ).eval()
    with pytest.raises(ExportError, match="groups=2"):
        convert(net, ExportMeta("g", CLASSES, 8, 8, input_channels=4,
                                per_channel_mean=(0.0,) * 4,
                                per_channel_std=(1.0,) * 4))


def test_wide_stride_rejected():
    net = nn.Sequential(
        nn.Conv2d(3, 4, 3, stride=3),
        nn.Flatten(),
        nn.Linear(4 * 10 * 10, 3),
        nn.Softmax(dim=1),
    ).eval()
    with pytest.raises(ExportError, match="stride 3"):
        convert(net, meta_for("s3"))


def test_missing_terminal_softmax_rejected():
    net = nn.Sequential(
        nn.Conv2d(3, 4, 3, padding=1),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(4, 3),
    ).eval()
    with pytest.raises(ExportError, match="softmax"):
        convert(net, meta_for("nosoftmax"))


def test_standalone_batchnorm_rejected():
    net = nn.Sequential(
        nn.BatchNorm2d(3),
        nn.Conv2d(3, 4, 3, padding=1),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(4, 3),
        nn.Softmax(dim=1),
    ).eval()
    with pytest.raises(ExportError, match="batch norm not directly after"):
        convert(net, meta_for("bnfirst"))


def test_shared_conv_output_cannot_fuse():
    class Shared(nn.Module):
        def __init__(self):
            super().__init__()
            self.conv = nn.Conv2d(3, 4, 3, padding=1)
            self.bn = nn.BatchNorm2d(4)
            self.fc = nn.Linear(4, 3)

        def forward(self, x):
            y = self.conv(x)
            z = self.bn(y) + y
            z = torch.flatten(F.adaptive_avg_pool2d(z, 1), 1)
            return F.softmax(self.fc(z), dim=1)

    with pytest.raises(ExportError, match="shared"):
        convert(Shared().eval(), meta_for("shared"))


def test_three_way_chunk_rejected():
    class Three(nn.Module):
        def __init__(self):
            super().__init__()
            self.conv = nn.Conv2d(3, 6, 3, padding=1)
            self.fc = nn.Linear(2, 3)

        def forward(self, x):
            a, _, _ = torch.chunk(self.conv(x), 3, dim=1)
            a = torch.flatten(F.adaptive_avg_pool2d(a, 1), 1)
            return F.softmax(self.fc(a), dim=1)

    with pytest.raises(ExportError, match="two-way"):
        convert(Three().eval(), meta_for("three"))


def test_unsupported_method_rejected():
    class Mean(nn.Module):
        def __init__(self):
            super().__init__()
            self.conv = nn.Conv2d(3, 4, 3, padding=1)
            self.fc = nn.Linear(4, 3)

        def forward(self, x):
            y = self.conv(x).mean(dim=(2, 3))
            return F.softmax(self.fc(y), dim=1)

    with pytest.raises(ExportError, match="'.mean\\(\\)'"):
        convert(Mean().eval(), meta_for("mean"))


def test_identity_layers_are_transparent():
    net = nn.Sequential(
        nn.Identity(),
        nn.Conv2d(3, 4, 3, padding=1),
        nn.Identity(),
        nn.SiLU(),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(4, 3),
        nn.Softmax(dim=1),
    ).eval()
    container, _ = convert(net, meta_for("ident"))
    kinds = [n.kind for n in container.nodes]
    assert kinds == ["INPUT", "CONV2D", "SILU", "GAP", "FLATTEN",
                     "LINEAR", "SOFTMAX"]


def test_meta_from_json_obj_validates():
    meta = ExportMeta.from_json_obj({
        "model_name": "m", "class_names": ["a", "b"],
        "input_height": 16, "input_width": 16,
    })
    assert meta.scale == pytest.approx(1.0 / 255.0)
    assert meta.resize_policy == "shortest_side_center_crop"
    with pytest.raises(ExportError, match="malformed"):
        ExportMeta.from_json_obj({"model_name": "m"})
