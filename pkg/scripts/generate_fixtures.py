"""Regenerate the committed test fixtures.

Produces, under tests/fixtures/:
  images/*.png, images/*.jpg   deterministic synthetic test images
  tiny.mslw                    16-node model covering every op kind
  twonode.mslw                 minimal INPUT+CONV2D format fixture
  golden_tiny.mslg             torch-computed activation bundle for
                               tiny.mslw on images/lesion_300x200.png

The golden bundle is the cross-implementation oracle: every activation
in it comes from torch functional ops (and torch bilinear resizing),
never from this package's engine. Rerunning this script must be a
no-op byte-wise; fixtures are committed so the suite runs without torch.

Usage: python3 scripts/generate_fixtures.py
"""

from __future__ import annotations

import base64
import hashlib
import io
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mpoxscreen.engine import OpNode  # noqa: E402
from mpoxscreen.model_io import (  # noqa: E402
    ModelContainer,
    ModelMetadata,
    save_model,
    write_blob_archive,
)

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
GOLDEN_MAGIC = b"MSLG"
CLASSES = ("mpox", "other_skin", "normal")


# ---------------------------------------------------------------------------
# Synthetic images: smooth low-frequency fields with a dark blob, enough
# structure for stable perceptual hashing and resize tests.
# ---------------------------------------------------------------------------

def synth_image(seed: int, h: int, w: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rng.uniform(40, 215, size=(6, 8, 3))
    t = torch.from_numpy(base.transpose(2, 0, 1)[None])
    field = F.interpolate(t, size=(h, w), mode="bilinear", align_corners=False)
    img = field[0].permute(1, 2, 0).numpy()

    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0.3, 0.7) * h, rng.uniform(0.3, 0.7) * w
    r = rng.uniform(0.12, 0.25) * min(h, w)
    blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r)))
    tint = rng.uniform(-70, -20, size=3)
    img = img + blob[..., None] * tint
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_images() -> dict[str, Path]:
    out = FIXTURES / "images"
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    specs = [
        ("lesion_300x200.png", 101, 200, 300, "PNG"),
        ("lesion_224x224.png", 102, 224, 224, "PNG"),
        ("lesion_160x240.png", 103, 240, 160, "PNG"),
        ("lesion_300x200.jpg", 101, 200, 300, "JPEG"),
        ("gray_224.png", 0, 0, 0, "GRAY"),
    ]
    for name, seed, h, w, fmt in specs:
        path = out / name
        if fmt == "GRAY":
            arr = np.full((224, 224, 3), 128, dtype=np.uint8)
            Image.fromarray(arr).save(path, format="PNG")
        elif fmt == "JPEG":
            arr = synth_image(seed, h, w)
            Image.fromarray(arr).save(path, format="JPEG", quality=95)
        else:
            arr = synth_image(seed, h, w)
            Image.fromarray(arr).save(path, format="PNG")
        paths[name] = path
    return paths


# ---------------------------------------------------------------------------
# Tiny model: every op kind once, ~1.6k parameters.
# ---------------------------------------------------------------------------

def tiny_weights(seed: int = 2024) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)

    def conv(cout, cin, k):
        fan_in = cin * k * k
        w = rng.normal(0, (2.0 / fan_in) ** 0.5, size=(cout, cin, k, k))
        b = rng.normal(0, 0.05, size=(cout,))
        return w.astype(np.float32), b.astype(np.float32)

    k1, b1 = conv(8, 3, 3)
    k5, b5 = conv(4, 4, 3)
    k10, b10 = conv(16, 8, 3)
    lw = (rng.normal(0, 0.25, size=(3, 16))).astype(np.float32)
    lb = rng.normal(0, 0.05, size=(3,)).astype(np.float32)
    return {"k1": k1, "b1": b1, "k5": k5, "b5": b5, "k10": k10, "b10": b10,
            "lw": lw, "lb": lb}


def tiny_nodes(w: dict[str, np.ndarray]) -> list[OpNode]:
    return [
        OpNode(0, "INPUT"),
        OpNode(1, "CONV2D", (0,), {"stride": 2, "padding": 1},
               {"kernel": w["k1"], "bias": w["b1"]}),
        OpNode(2, "SILU", (1,)),
        OpNode(3, "SPLIT2", (2,), {"which": 0}),
        OpNode(4, "SPLIT2", (2,), {"which": 1}),
        OpNode(5, "CONV2D", (3,), {"stride": 1, "padding": 1},
               {"kernel": w["k5"], "bias": w["b5"]}),
        OpNode(6, "SILU", (5,)),
        OpNode(7, "ADD", (6, 4)),
        OpNode(8, "CONCAT", (7, 3)),
        OpNode(9, "MAXPOOL", (8,), {"kernel": 2, "stride": 2, "padding": 0}),
        OpNode(10, "CONV2D", (9,), {"stride": 2, "padding": 1},
               {"kernel": w["k10"], "bias": w["b10"]}),
        OpNode(11, "SILU", (10,)),
        OpNode(12, "GAP", (11,)),
        OpNode(13, "DROPOUT_NOOP", (12,)),
        OpNode(14, "FLATTEN", (13,)),
        OpNode(15, "LINEAR", (14,), {}, {"weight": w["lw"], "bias": w["lb"]}),
        OpNode(16, "SOFTMAX", (15,)),
    ]


def build_tiny() -> ModelContainer:
    w = tiny_weights()
    nodes = tiny_nodes(w)
    params = sum(int(a.size) for n in nodes for a in n.weights.values())
    meta = ModelMetadata(
        model_name="msl-tiny-fixture",
        class_names=CLASSES,
        input_height=32, input_width=32, input_channels=3,
        per_channel_mean=(0.0, 0.0, 0.0),
        per_channel_std=(1.0, 1.0, 1.0),
        param_count=params,
        source_fingerprint="fixture-seed-2024",
    )
    return ModelContainer(metadata=meta, nodes=nodes)


def build_twonode() -> ModelContainer:
    rng = np.random.default_rng(31)
    k = rng.normal(0, 0.2, size=(4, 3, 3, 3)).astype(np.float32)
    b = rng.normal(0, 0.05, size=(4,)).astype(np.float32)
    meta = ModelMetadata(
        model_name="msl-twonode-fixture",
        class_names=CLASSES,
        input_height=8, input_width=8, input_channels=3,
        per_channel_mean=(0.0, 0.0, 0.0),
        per_channel_std=(1.0, 1.0, 1.0),
        param_count=int(k.size + b.size),
        source_fingerprint="fixture-seed-31",
    )
    nodes = [OpNode(0, "INPUT"),
             OpNode(1, "CONV2D", (0,), {"stride": 1, "padding": 1},
                    {"kernel": k, "bias": b})]
    return ModelContainer(metadata=meta, nodes=nodes)


# ---------------------------------------------------------------------------
# Golden bundle: torch-only forward pass.
# ---------------------------------------------------------------------------

def torch_preprocess(pixels: np.ndarray, meta: ModelMetadata) -> torch.Tensor:
    """Torch reimplementation of the shortest-side + center-crop policy."""
    th, tw = meta.input_height, meta.input_width
    h, w = pixels.shape[0], pixels.shape[1]
    t = torch.from_numpy(pixels.astype(np.float64)).permute(2, 0, 1)[None]
    scale = max(th / h, tw / w)
    rh = max(th, int(round(h * scale)))
    rw = max(tw, int(round(w * scale)))
    r = F.interpolate(t, size=(rh, rw), mode="bilinear", align_corners=False)
    y0 = (rh - th) // 2
    x0 = (rw - tw) // 2
    r = r[:, :, y0:y0 + th, x0:x0 + tw]
    mean = torch.tensor(meta.per_channel_mean, dtype=torch.float64).view(1, -1, 1, 1)
    std = torch.tensor(meta.per_channel_std, dtype=torch.float64).view(1, -1, 1, 1)
    return ((r * meta.scale - mean) / std).float()


def torch_tiny_forward(x: torch.Tensor, w: dict[str, np.ndarray]) -> dict[int, torch.Tensor]:
    tw_ = {k: torch.from_numpy(v) for k, v in w.items()}
    acts: dict[int, torch.Tensor] = {0: x}
    acts[1] = F.conv2d(x, tw_["k1"], tw_["b1"], stride=2, padding=1)
    acts[2] = F.silu(acts[1])
    acts[3] = acts[2][:, :4]
    acts[4] = acts[2][:, 4:]
    acts[5] = F.conv2d(acts[3], tw_["k5"], tw_["b5"], stride=1, padding=1)
    acts[6] = F.silu(acts[5])
    acts[7] = acts[6] + acts[4]
    acts[8] = torch.cat([acts[7], acts[3]], dim=1)
    acts[9] = F.max_pool2d(acts[8], kernel_size=2, stride=2)
    acts[10] = F.conv2d(acts[9], tw_["k10"], tw_["b10"], stride=2, padding=1)
    acts[11] = F.silu(acts[10])
    acts[12] = F.adaptive_avg_pool2d(acts[11], 1)
    acts[13] = acts[12]
    acts[14] = acts[13].flatten(1)
    acts[15] = F.linear(acts[14], tw_["lw"], tw_["lb"])
    acts[16] = F.softmax(acts[15], dim=1)
    return acts


def build_golden(model_path: Path, image_path: Path, container: ModelContainer) -> bytes:
    image_bytes = image_path.read_bytes()
    pixels = np.asarray(Image.open(io.BytesIO(image_bytes)).convert("RGB"),
                        dtype=np.uint8)
    x = torch_preprocess(pixels, container.metadata)
    with torch.no_grad():
        acts = torch_tiny_forward(x, tiny_weights())

    blobs = [("input", x.numpy())]
    for node_id in sorted(acts):
        blobs.append((f"node_{node_id}", acts[node_id].numpy()))
    blobs.append(("probs", acts[max(acts)].numpy().reshape(-1)))

    header = {
        "kind": "golden-bundle/v1",
        "image_b64": base64.b64encode(image_bytes).decode("ascii"),
        "image_name": image_path.name,
        "model_sha256": hashlib.sha256(model_path.read_bytes()).hexdigest(),
        "node_ids": sorted(acts),
        "oracle": "torch-2.x functional ops",
    }
    return write_blob_archive(GOLDEN_MAGIC, header, blobs)


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(0)
    torch.set_num_threads(1)

    images = write_images()
    print(f"wrote {len(images)} images")

    tiny = build_tiny()
    tiny_path = FIXTURES / "tiny.mslw"
    n = save_model(tiny, tiny_path)
    print(f"wrote {tiny_path} ({n} bytes, {tiny.metadata.param_count} params)")

    twonode = build_twonode()
    two_path = FIXTURES / "twonode.mslw"
    n = save_model(twonode, two_path)
    print(f"wrote {two_path} ({n} bytes, {twonode.metadata.param_count} params)")

    golden = build_golden(tiny_path, images["lesion_300x200.png"], tiny)
    golden_path = FIXTURES / "golden_tiny.mslg"
    golden_path.write_bytes(golden)
    print(f"wrote {golden_path} ({len(golden)} bytes)")


if __name__ == "__main__":
    main()
