"""Dataset manifests: ingestion, ratio splits, and duplicate checking.

Manifests are JSONL, one record per line. Split assignment keys on a
seeded hash of each record id, never on list position, so reordering a
manifest cannot change who lands where.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .imaging import RawImage, _bilinear_resize, decode

LABELS = ("mpox", "other_skin", "normal")
SOURCES = ("real", "synthetic")
SPLITS = ("train", "val", "test")

DEFAULT_RATIOS = {"train": 0.75, "val": 0.10, "test": 0.15}
DEFAULT_SYNTHETIC_FRACTION = 0.5
DEFAULT_HAMMING_THRESHOLD = 6


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    id: str
    path: str
    label: str
    source: str
    sha256: str
    phash: int
    split: str | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise DatasetError(f"record '{self.id}': unknown label '{self.label}'")
        if self.source not in SOURCES:
            raise DatasetError(f"record '{self.id}': unknown source '{self.source}'")
        if self.source == "synthetic" and self.label != "mpox":
            raise DatasetError(
                f"record '{self.id}': synthetic records are only valid for the "
                f"mpox class, got label '{self.label}'")
        if self.split is not None and self.split not in SPLITS:
            raise DatasetError(f"record '{self.id}': unknown split '{self.split}'")
        if len(self.sha256) != 64:
            raise DatasetError(f"record '{self.id}': sha256 must be 64 hex chars")
        if not 0 <= self.phash < (1 << 64):
            raise DatasetError(f"record '{self.id}': phash must fit in 64 bits")

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "path": self.path,
            "label": self.label,
            "source": self.source,
            "sha256": self.sha256,
            "phash": f"{self.phash:016x}",
            "split": self.split,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SampleRecord":
        try:
            return cls(
                id=str(obj["id"]),
                path=str(obj["path"]),
                label=str(obj["label"]),
                source=str(obj["source"]),
                sha256=str(obj["sha256"]),
                phash=int(str(obj["phash"]), 16),
                split=obj.get("split"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"malformed manifest record {obj!r}: {e}") from e


@dataclass
class DatasetManifest:
    records: list[SampleRecord] = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DatasetError(f"duplicate record ids: {dupes[:5]}")
        paths = [r.path for r in self.records]
        if len(set(paths)) != len(paths):
            raise DatasetError("duplicate record paths in manifest")

    def by_split(self, split: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == split]

    def by_label(self, label: str) -> list[SampleRecord]:
        return [r for r in self.records if r.label == label]

    def save(self, path: str | Path):
        lines = []
        if self.provenance:
            lines.append(json.dumps({"provenance": self.provenance}, ensure_ascii=False))
        for rec in self.records:
            lines.append(json.dumps(rec.to_json_obj(), ensure_ascii=False))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        records = []
        provenance = ""
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if "provenance" in obj and "id" not in obj:
                provenance = str(obj["provenance"])
                continue
            records.append(SampleRecord.from_json_obj(obj))
        return cls(records=records, provenance=provenance)


# ---------------------------------------------------------------------------
# Perceptual hashing
# ---------------------------------------------------------------------------

def dhash(img: RawImage) -> int:
    """64-bit difference hash.

    Luma (ITU-R 601) is area-averaged onto a 9x8 grid; each bit records
    whether a cell is brighter than its right neighbor, packed row-major
    with the first comparison in the most significant bit.
    """
    px = img.pixels.astype(np.float64)
    gray = 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]
    h, w = gray.shape
    if h < 8 or w < 9:
        gray = _bilinear_resize(gray[..., None], max(h, 8), max(w, 9))[..., 0]
        h, w = gray.shape

    row_edges = (np.arange(9) * h) // 8
    col_edges = (np.arange(10) * w) // 9
    cells = np.empty((8, 9), dtype=np.float64)
    for r in range(8):
        band = gray[row_edges[r]:row_edges[r + 1]]
        for c in range(9):
            cells[r, c] = band[:, col_edges[c]:col_edges[c + 1]].mean()

    bits = cells[:, :-1] > cells[:, 1:]
    value = 0
    for bit in bits.reshape(-1):
        value = (value << 1) | int(bit)
    return value


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def record_for_file(file_path: Path, rec_id: str, rel_path: str,
                    label: str, source: str) -> SampleRecord:
    data = file_path.read_bytes()
    img = decode(data)
    return SampleRecord(
        id=rec_id,
        path=rel_path,
        label=label,
        source=source,
        sha256=hashlib.sha256(data).hexdigest(),
        phash=dhash(img),
    )


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

@dataclass
class IngestResult:
    manifest: DatasetManifest
    skipped: list[str] = field(default_factory=list)


def ingest(source: str | Path, provenance: str = "") -> IngestResult:
    """Build a manifest from a `<label>/<source>/<file>` directory tree or
    a JSONL listing file with per-line {path, label, source} objects.
    Unreadable files are skipped and reported, never silently dropped."""
    source = Path(source)
    if source.is_dir():
        result = _ingest_tree(source, provenance)
    elif source.is_file():
        result = _ingest_listing(source, provenance)
    else:
        raise DatasetError(f"dataset source '{source}' does not exist")
    if not result.manifest.records:
        raise DatasetError(f"dataset at '{source}' contains no usable images")
    return result


def _ingest_tree(root: Path, provenance: str) -> IngestResult:
    records: list[SampleRecord] = []
    skipped: list[str] = []
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if label_dir.name not in LABELS:
            raise DatasetError(
                f"unknown label directory '{label_dir.name}'; expected one of {LABELS}")
        for source_dir in sorted(p for p in label_dir.iterdir() if p.is_dir()):
            if source_dir.name not in SOURCES:
                raise DatasetError(
                    f"unknown source directory '{label_dir.name}/{source_dir.name}'; "
                    f"expected one of {SOURCES}")
            for file_path in sorted(p for p in source_dir.rglob("*") if p.is_file()):
                rel = file_path.relative_to(root).as_posix()
                try:
                    records.append(record_for_file(
                        file_path, rel, rel, label_dir.name, source_dir.name))
                except (ValueError, OSError) as e:
                    skipped.append(f"{rel}: {e}")
    return IngestResult(DatasetManifest(records=records, provenance=provenance), skipped)


def _ingest_listing(listing: Path, provenance: str) -> IngestResult:
    records: list[SampleRecord] = []
    skipped: list[str] = []
    base = listing.parent
    for lineno, line in enumerate(listing.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            rel = str(obj["path"])
            label = str(obj["label"])
            src = str(obj["source"])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DatasetError(f"{listing}:{lineno}: malformed listing line: {e}") from e
        file_path = base / rel
        if not file_path.is_file():
            skipped.append(f"{rel}: file not found")
            continue
        try:
            records.append(record_for_file(
                file_path, str(obj.get("id", rel)), rel, label, src))
        except (ValueError, OSError) as e:
            skipped.append(f"{rel}: {e}")
    return IngestResult(DatasetManifest(records=records, provenance=provenance), skipped)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def _assignment_key(seed: int, rec_id: str) -> str:
    return hashlib.sha256(f"{seed}:{rec_id}".encode("utf-8")).hexdigest()


def split(manifest: DatasetManifest, ratios: dict | None = None,
          synthetic_fraction: float = DEFAULT_SYNTHETIC_FRACTION,
          seed: int = 0) -> DatasetManifest:
    """Assign every record to train/val/test.

    Per class: val and test sizes are round(ratio * n) with the remainder
    going to train. Synthetic records always land in train; the split is
    infeasible if they cannot make up the requested fraction of the train
    bucket within one sample, or if too few real records remain for the
    synthetic-free val and test buckets.
    """
    ratios = dict(DEFAULT_RATIOS if ratios is None else ratios)
    for name in SPLITS:
        if name not in ratios:
            raise DatasetError(f"ratios must define '{name}'")
        if ratios[name] < 0:
            raise DatasetError(f"ratio '{name}' must be nonnegative")
    if abs(sum(ratios.values()) - 1.0) > 1e-9:
        raise DatasetError(f"ratios must sum to 1, got {sum(ratios.values())!r}")
    if not 0.0 <= synthetic_fraction <= 1.0:
        raise DatasetError(f"synthetic fraction {synthetic_fraction} outside [0, 1]")

    assigned: dict[str, str] = {}
    for label in LABELS:
        class_records = manifest.by_label(label)
        if not class_records:
            continue
        n = len(class_records)
        n_val = round(ratios["val"] * n)
        n_test = round(ratios["test"] * n)
        n_train = n - n_val - n_test
        if n_train < 0:
            raise DatasetError(f"class '{label}': ratios leave a negative train bucket")

        synthetic = [r for r in class_records if r.source == "synthetic"]
        real = [r for r in class_records if r.source == "real"]
        if len(synthetic) > n_train:
            raise DatasetError(
                f"class '{label}': {len(synthetic)} synthetic records exceed the "
                f"train bucket of {n_train}; val/test must stay synthetic-free")
        if synthetic:
            target = round(synthetic_fraction * n_train)
            if abs(len(synthetic) - target) > 1:
                raise DatasetError(
                    f"class '{label}': train bucket of {n_train} needs "
                    f"{target} synthetic records for fraction {synthetic_fraction}, "
                    f"manifest provides {len(synthetic)} (off by "
                    f"{abs(len(synthetic) - target)})")

        for rec in synthetic:
            assigned[rec.id] = "train"

        real_sorted = sorted(real, key=lambda r: (_assignment_key(seed, r.id), r.id))
        if len(real_sorted) < n_val + n_test:
            raise DatasetError(
                f"class '{label}': {len(real_sorted)} real records cannot fill "
                f"val+test of {n_val + n_test} (short by "
                f"{n_val + n_test - len(real_sorted)})")
        for rec in real_sorted[:n_val]:
            assigned[rec.id] = "val"
        for rec in real_sorted[n_val:n_val + n_test]:
            assigned[rec.id] = "test"
        for rec in real_sorted[n_val + n_test:]:
            assigned[rec.id] = "train"

    new_records = [replace(r, split=assigned[r.id]) if r.id in assigned else r
                   for r in manifest.records]
    return DatasetManifest(records=new_records, provenance=manifest.provenance)


# ---------------------------------------------------------------------------
# Duplicate checking
# ---------------------------------------------------------------------------

@dataclass
class DuplicityReport:
    threshold: int
    exact: list[tuple[str, str]] = field(default_factory=list)
    near: list[tuple[str, str, int]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.exact and not self.near

    def to_json_obj(self) -> dict:
        return {
            "threshold": self.threshold,
            "exact_duplicates": [{"a": a, "b": b} for a, b in self.exact],
            "near_duplicates": [{"a": a, "b": b, "distance": d}
                                for a, b, d in self.near],
            "clean": self.clean,
        }


def dedup_check(a: DatasetManifest, b: DatasetManifest,
                hamming_threshold: int = DEFAULT_HAMMING_THRESHOLD) -> DuplicityReport:
    """Cross-check two manifests for shared content.

    Exact duplicates share a sha256; near duplicates sit within the
    Hamming threshold on the perceptual hash without being byte-equal.
    """
    if hamming_threshold < 0:
        raise DatasetError("hamming threshold must be nonnegative")
    report = DuplicityReport(threshold=hamming_threshold)

    by_sha: dict[str, list[SampleRecord]] = {}
    for rec in b.records:
        by_sha.setdefault(rec.sha256, []).append(rec)

    for ra in a.records:
        exact_ids = {rb.id for rb in by_sha.get(ra.sha256, ())}
        for rb in by_sha.get(ra.sha256, ()):
            report.exact.append((ra.id, rb.id))
        for rb in b.records:
            if rb.id in exact_ids:
                continue
            d = hamming(ra.phash, rb.phash)
            if d <= hamming_threshold:
                report.near.append((ra.id, rb.id, d))
    return report
