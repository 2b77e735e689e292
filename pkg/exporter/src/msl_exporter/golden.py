"""Golden activation bundles: the cross-implementation oracle.

A bundle freezes one forward pass of the source torch module: the
image, the preprocessed input tensor, every intermediate activation,
and the final probabilities, keyed by the node ids of the exported
container. The engine test suite replays the image through its own
preprocessing and executor and compares node by node, so every number
in the bundle must come from torch ops, never from the engine.
"""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image

from mpoxscreen.model_io import ModelMetadata, write_blob_archive

from .convert import ExportError, ExportMeta, convert, trace_module

GOLDEN_MAGIC = b"MSLG"


def torch_preprocess(pixels: np.ndarray, meta: ModelMetadata) -> torch.Tensor:
    """Shortest-side resize + center crop (or stretch), torch bilinear."""
    th, tw = meta.input_height, meta.input_width
    h, w = pixels.shape[0], pixels.shape[1]
    t = torch.from_numpy(pixels.astype(np.float64)).permute(2, 0, 1)[None]
    if meta.resize_policy == "stretch":
        r = F.interpolate(t, size=(th, tw), mode="bilinear", align_corners=False)
    else:
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


class _CaptureInterpreter(torch.fx.Interpreter):
    """Runs the traced module recording every fx node's output tensor."""

    def __init__(self, gm: torch.fx.GraphModule):
        super().__init__(gm)
        self.captured: dict[str, torch.Tensor] = {}

    def run_node(self, n):
        out = super().run_node(n)
        if isinstance(out, torch.Tensor):
            self.captured[n.name] = out
        return out


def emit_golden(module: nn.Module, meta: ExportMeta,
                image_bytes: bytes, image_name: str) -> bytes:
    """Capture one forward pass of ``module`` as a golden bundle.

    The container implied by (module, meta) is serialized in memory to
    bind the bundle to its sha256; exporting the same module with the
    same metadata is deterministic, so the hash matches the .mslw file.
    """
    container, golden_map = convert(module, meta)

    try:
        pixels = np.asarray(
            Image.open(io.BytesIO(image_bytes)).convert("RGB"), dtype=np.uint8)
    except Exception as e:
        raise ExportError(f"cannot decode image '{image_name}': {e}") from e

    x = torch_preprocess(pixels, container.metadata)
    gm = trace_module(module)
    interp = _CaptureInterpreter(gm)
    with torch.no_grad():
        probs = interp.run(x)

    blobs: list[tuple[str, np.ndarray]] = [("input", x.numpy())]
    for node_id in sorted(golden_map):
        fx_name = golden_map[node_id]
        if fx_name not in interp.captured:
            raise ExportError(f"forward pass produced no tensor for '{fx_name}'")
        blobs.append((f"node_{node_id}", interp.captured[fx_name].numpy()))
    blobs.append(("probs", probs.numpy().reshape(-1)))

    header = {
        "kind": "golden-bundle/v1",
        "image_b64": base64.b64encode(image_bytes).decode("ascii"),
        "image_name": image_name,
        "model_sha256": container.sha256(),
        "node_ids": sorted(golden_map),
        "oracle": f"torch-{torch.__version__} fx interpreter",
    }
    return write_blob_archive(GOLDEN_MAGIC, header, blobs)


def emit_golden_file(module: nn.Module, meta: ExportMeta,
                     image_path: str | Path, out_path: str | Path) -> int:
    image_path = Path(image_path)
    data = emit_golden(module, meta, image_path.read_bytes(), image_path.name)
    Path(out_path).write_bytes(data)
    return len(data)
