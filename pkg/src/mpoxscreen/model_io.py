"""MSLW model container: bit-exact reader and writer.

Layout: magic ``MSLW`` | version u32 LE | header length u32 LE | UTF-8
JSON header | weight blob section. The header is canonical JSON
(sorted keys, no whitespace) padded with spaces so the blob section
starts on a 16-byte file boundary; every blob offset is 16-byte aligned
relative to the section start and all values are little-endian float32.
Writing a loaded container reproduces the original file byte for byte.

Loading keeps a single copy of the file in memory and exposes weights
as zero-copy views into it, so peak allocation stays well under three
times the file size.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import OpNode, VALID_KINDS

MAGIC = b"MSLW"
VERSION = 1
_ALIGN = 16

# Deployment envelope. The parameter range brackets the published 1.4M
# figure; the 8 MB bound covers f32 storage of a 1.44M-parameter model
# (about 5.8 MB) with headroom for the header.
PARAM_RANGE = (1_000_000, 2_000_000)
FILE_SIZE_LIMIT = 8_000_000

RESIZE_POLICIES = ("shortest_side_center_crop", "stretch")


class ContainerError(ValueError):
    """Base error for malformed or inconsistent containers."""


class FormatError(ContainerError):
    """Structural damage: bad magic, bad version, truncation, misalignment."""


class IntegrityError(ContainerError):
    """Internally inconsistent content: counts, references, graph order."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


# ---------------------------------------------------------------------------
# Generic blob archive: the byte-level layout shared by model containers
# and golden activation bundles (which use a different magic).
# ---------------------------------------------------------------------------

def write_blob_archive(magic: bytes, header: dict,
                       blobs: list[tuple[str, np.ndarray]]) -> bytes:
    """Serialize a JSON header plus named float32 blobs.

    The writer injects a ``blobs`` table (name, offset, shape) into the
    header; offsets are 16-byte aligned relative to the blob section,
    which itself starts on a 16-byte file boundary.
    """
    if len(magic) != 4:
        raise ContainerError("magic must be exactly 4 bytes")
    if "blobs" in header:
        raise ContainerError("header may not predefine the 'blobs' table")

    arrays = [(name, np.ascontiguousarray(arr, dtype=np.float32))
              for name, arr in blobs]
    table = []
    offset = 0
    for name, arr in arrays:
        table.append({"name": name, "offset": offset, "shape": list(arr.shape)})
        offset = (offset + arr.nbytes + _ALIGN - 1) // _ALIGN * _ALIGN

    full_header = dict(header)
    full_header["blobs"] = table
    header_bytes = _canonical_json(full_header)
    pad = (-(12 + len(header_bytes))) % _ALIGN
    header_bytes += b" " * pad

    section_len = 0
    if arrays:
        section_len = table[-1]["offset"] + arrays[-1][1].nbytes
    section = bytearray(section_len)
    for entry, (_, arr) in zip(table, arrays):
        start = entry["offset"]
        section[start:start + arr.nbytes] = arr.tobytes()

    return (magic + struct.pack("<II", VERSION, len(header_bytes))
            + header_bytes + bytes(section))


def read_blob_archive(magic: bytes, data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse an archive written by write_blob_archive.

    Returns the header (without the blob table) and the named arrays as
    zero-copy views into ``data``. Raises FormatError naming the byte
    offset for any structural damage.
    """
    if len(data) < 12:
        raise FormatError(f"file truncated at byte {len(data)}: 12-byte preamble required")
    if data[:4] != magic:
        raise FormatError(f"bad magic {data[:4]!r} at byte 0, expected {magic!r}")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version} at byte 4")
    body_start = 12 + header_len
    if body_start > len(data):
        raise FormatError(
            f"file truncated at byte {len(data)}: header declares {header_len} bytes")
    if body_start % _ALIGN != 0:
        raise FormatError(
            f"blob section starts at byte {body_start}, not {_ALIGN}-byte aligned")
    try:
        header = json.loads(data[12:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"header at byte 12 is not valid JSON: {e}") from e
    if not isinstance(header, dict):
        raise FormatError("header at byte 12 must be a JSON object")
    if "blobs" not in header:
        raise FormatError("header is missing the 'blobs' section")

    arrays: dict[str, np.ndarray] = {}
    for entry in header.pop("blobs"):
        try:
            name = str(entry["name"])
            offset = int(entry["offset"])
            shape = tuple(int(d) for d in entry["shape"])
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"malformed blob table entry {entry!r}: {e}") from e
        if name in arrays:
            raise IntegrityError(f"duplicate blob name '{name}'")
        if not shape or min(shape) < 1:
            raise IntegrityError(f"blob '{name}' has invalid shape {shape}")
        if offset % _ALIGN != 0:
            raise FormatError(
                f"blob '{name}' offset {offset} (byte {body_start + offset}) "
                f"is not {_ALIGN}-byte aligned")
        count = int(np.prod(shape))
        end = body_start + offset + count * 4
        if end > len(data):
            raise FormatError(
                f"blob '{name}' spans bytes {body_start + offset}..{end} "
                f"but the file ends at byte {len(data)}")
        arrays[name] = np.frombuffer(
            data, dtype="<f4", count=count, offset=body_start + offset).reshape(shape)
    return header, arrays


@dataclass(frozen=True)
class ModelMetadata:
    model_name: str
    class_names: tuple[str, ...]
    input_height: int
    input_width: int
    input_channels: int
    per_channel_mean: tuple[float, ...]
    per_channel_std: tuple[float, ...]
    param_count: int
    layout: str = "NCHW"
    color_order: str = "RGB"
    resize_policy: str = "shortest_side_center_crop"
    scale: float = 1.0 / 255.0
    source_fingerprint: str = ""

    def __post_init__(self):
        if not self.model_name:
            raise ContainerError("model_name must be non-empty")
        if len(self.class_names) < 2:
            raise ContainerError("class_names must list at least two classes")
        if min(self.input_height, self.input_width, self.input_channels) < 1:
            raise ContainerError("input geometry must be positive")
        if self.layout != "NCHW":
            raise ContainerError(f"unsupported layout '{self.layout}', expected NCHW")
        if self.color_order != "RGB":
            raise ContainerError(f"unsupported color order '{self.color_order}', expected RGB")
        if self.resize_policy not in RESIZE_POLICIES:
            raise ContainerError(f"unknown resize policy '{self.resize_policy}'")
        if len(self.per_channel_mean) != self.input_channels \
                or len(self.per_channel_std) != self.input_channels:
            raise ContainerError("normalization stats must have one value per channel")
        if any(s <= 0 for s in self.per_channel_std):
            raise ContainerError("per-channel std values must be positive")
        if self.param_count < 1:
            raise ContainerError("param_count must be at least 1")

    @property
    def input_shape(self) -> tuple[int, int, int, int]:
        return (1, self.input_channels, self.input_height, self.input_width)

    def to_header(self) -> dict:
        return {
            "model_name": self.model_name,
            "class_names": list(self.class_names),
            "input": {
                "height": self.input_height,
                "width": self.input_width,
                "channels": self.input_channels,
                "layout": self.layout,
                "color_order": self.color_order,
            },
            "preprocess": {
                "resize_policy": self.resize_policy,
                "scale": self.scale,
                "per_channel_mean": list(self.per_channel_mean),
                "per_channel_std": list(self.per_channel_std),
            },
            "param_count": self.param_count,
            "source_fingerprint": self.source_fingerprint,
        }

    @classmethod
    def from_header(cls, obj: dict) -> "ModelMetadata":
        try:
            inp = obj["input"]
            pre = obj["preprocess"]
            return cls(
                model_name=str(obj["model_name"]),
                class_names=tuple(str(c) for c in obj["class_names"]),
                input_height=int(inp["height"]),
                input_width=int(inp["width"]),
                input_channels=int(inp["channels"]),
                per_channel_mean=tuple(float(v) for v in pre["per_channel_mean"]),
                per_channel_std=tuple(float(v) for v in pre["per_channel_std"]),
                param_count=int(obj["param_count"]),
                layout=str(inp["layout"]),
                color_order=str(inp["color_order"]),
                resize_policy=str(pre["resize_policy"]),
                scale=float(pre["scale"]),
                source_fingerprint=str(obj.get("source_fingerprint", "")),
            )
        except (KeyError, TypeError) as e:
            raise FormatError(f"metadata header is missing or malformed: {e}") from e


@dataclass
class ModelContainer:
    metadata: ModelMetadata
    nodes: list[OpNode]
    file_size_bytes: int | None = None

    def describe(self) -> dict:
        m = self.metadata
        return {
            "model_name": m.model_name,
            "class_names": list(m.class_names),
            "input": {"height": m.input_height, "width": m.input_width,
                      "channels": m.input_channels, "layout": m.layout,
                      "color_order": m.color_order},
            "resize_policy": m.resize_policy,
            "param_count": m.param_count,
            "node_count": len(self.nodes),
            "file_size_bytes": self.file_size_bytes,
            "source_fingerprint": m.source_fingerprint,
        }

    def to_bytes(self) -> bytes:
        blobs: list[tuple[str, np.ndarray]] = []
        graph = []
        for node in self.nodes:
            weight_refs = {}
            for wname in sorted(node.weights):
                ref = f"n{node.id}.{wname}"
                weight_refs[wname] = ref
                blobs.append((ref, node.weights[wname]))
            graph.append({
                "id": node.id,
                "kind": node.kind,
                "inputs": list(node.inputs),
                "attrs": dict(node.attrs),
                "weights": weight_refs,
            })
        header = {"metadata": self.metadata.to_header(), "graph": graph}
        return write_blob_archive(MAGIC, header, blobs)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _structural_check(nodes: list[OpNode]):
    seen: set[int] = set()
    prev = -1
    for node in nodes:
        if node.kind not in VALID_KINDS:
            raise IntegrityError(f"node {node.id}: unknown op kind '{node.kind}'")
        if node.id <= prev or node.id in seen:
            raise IntegrityError(f"node {node.id}: ids must be unique and increasing")
        for ref in node.inputs:
            if ref >= node.id:
                raise IntegrityError(
                    f"node {node.id}: input {ref} is a forward or self reference")
            if ref not in seen:
                raise IntegrityError(f"node {node.id}: input {ref} does not exist")
        seen.add(node.id)
        prev = node.id


def load_model_bytes(data: bytes) -> ModelContainer:
    header, arrays = read_blob_archive(MAGIC, data)
    for key in ("metadata", "graph"):
        if key not in header:
            raise FormatError(f"header is missing the '{key}' section")

    metadata = ModelMetadata.from_header(header["metadata"])
    total_elements = sum(int(a.size) for a in arrays.values())

    nodes: list[OpNode] = []
    for gnode in header["graph"]:
        try:
            node_id = int(gnode["id"])
            kind = str(gnode["kind"])
            inputs = tuple(int(i) for i in gnode["inputs"])
            attrs = dict(gnode.get("attrs", {}))
            weight_refs = dict(gnode.get("weights", {}))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"malformed graph node entry {gnode!r}: {e}") from e
        weights = {}
        for wname, ref in weight_refs.items():
            if ref not in arrays:
                raise IntegrityError(
                    f"node {node_id}: weight '{wname}' references missing blob '{ref}'")
            weights[wname] = arrays.pop(ref)
        nodes.append(OpNode(id=node_id, kind=kind, inputs=inputs,
                            attrs=attrs, weights=weights))
    if arrays:
        raise IntegrityError(
            f"blobs not referenced by any node: {sorted(arrays)}")

    _structural_check(nodes)

    if total_elements != metadata.param_count:
        raise IntegrityError(
            f"declared param_count {metadata.param_count} does not match "
            f"blob contents totaling {total_elements} elements")

    return ModelContainer(metadata=metadata, nodes=nodes, file_size_bytes=len(data))


def load_model(path: str | Path) -> ModelContainer:
    return load_model_bytes(Path(path).read_bytes())


def save_model(container: ModelContainer, path: str | Path) -> int:
    data = container.to_bytes()
    Path(path).write_bytes(data)
    container.file_size_bytes = len(data)
    return len(data)


@dataclass
class EnvelopeReport:
    param_count: int
    param_range: tuple[int, int]
    file_size_bytes: int
    file_size_limit: int
    messages: list[str] = field(default_factory=list)

    @property
    def params_conforming(self) -> bool:
        lo, hi = self.param_range
        return lo <= self.param_count <= hi

    @property
    def size_conforming(self) -> bool:
        return self.file_size_bytes <= self.file_size_limit

    @property
    def conforming(self) -> bool:
        return self.params_conforming and self.size_conforming


def validate_envelope(container: ModelContainer) -> EnvelopeReport:
    """Check a loaded model against the deployment envelope.

    Out-of-envelope models still load and run; the report only marks
    them non-conforming so callers can warn or refuse as they see fit.
    """
    size = container.file_size_bytes
    if size is None:
        size = len(container.to_bytes())
    report = EnvelopeReport(
        param_count=container.metadata.param_count,
        param_range=PARAM_RANGE,
        file_size_bytes=size,
        file_size_limit=FILE_SIZE_LIMIT,
    )
    lo, hi = PARAM_RANGE
    if not report.params_conforming:
        report.messages.append(
            f"param_count {report.param_count:,} outside envelope [{lo:,}, {hi:,}]")
    if not report.size_conforming:
        report.messages.append(
            f"file size {size:,} bytes exceeds envelope limit "
            f"{FILE_SIZE_LIMIT:,} bytes")
    if not report.messages:
        report.messages.append(
            f"conforming: {report.param_count:,} params in [{lo:,}, {hi:,}], "
            f"{size:,} bytes <= {FILE_SIZE_LIMIT:,}")
    return report
