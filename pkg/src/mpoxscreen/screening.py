"""Screening pipeline shared by the CLI and the HTTP service: decode,
preprocess, execute, triage, and the case-log record types.

The triage thresholds are operational defaults, not published values;
they bias toward sensitivity, with a review band for uncertain cases,
and are configurable wherever this module is used.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .engine import execute
from .imaging import decode, preprocess
from .model_io import ModelContainer

TRIAGE_POSITIVE = "screen_positive_isolate_and_confirm_pcr"
TRIAGE_NEGATIVE = "screen_negative_monitor"
TRIAGE_REVIEW = "indeterminate_review"
TRIAGE_LEVELS = (TRIAGE_NEGATIVE, TRIAGE_REVIEW, TRIAGE_POSITIVE)

DEFAULT_THRESHOLD = 0.50
DEFAULT_REVIEW_FLOOR = 0.20

OPERATOR_DECISIONS = ("isolated", "referred_pcr", "released", "pending")


class ScreeningError(ValueError):
    pass


def triage_rule(probabilities: dict[str, float], target: str = "mpox",
                threshold: float = DEFAULT_THRESHOLD,
                review_floor: float = DEFAULT_REVIEW_FLOOR) -> str:
    """Map class probabilities to a triage decision.

    Positive when p(target) clears the threshold; review when the target
    wins the argmax without clearing it, or when p(target) reaches the
    review floor; negative otherwise. Monotone in p(target).
    """
    if target not in probabilities:
        raise ScreeningError(f"probabilities lack the target class '{target}'")
    if not 0.0 < threshold <= 1.0 or not 0.0 <= review_floor <= threshold:
        raise ScreeningError(
            f"need 0 < threshold <= 1 and 0 <= review_floor <= threshold, "
            f"got {threshold}, {review_floor}")
    values = list(probabilities.values())
    if min(values) < -1e-9 or abs(sum(values) - 1.0) > 1e-4:
        raise ScreeningError(f"probabilities are not a simplex: {probabilities}")

    p_target = probabilities[target]
    if p_target >= threshold:
        return TRIAGE_POSITIVE
    if max(probabilities, key=lambda k: (probabilities[k], k == target)) == target:
        return TRIAGE_REVIEW
    if p_target >= review_floor:
        return TRIAGE_REVIEW
    return TRIAGE_NEGATIVE


@dataclass(frozen=True)
class ScreeningResult:
    probabilities: dict[str, float]
    predicted: str
    triage: str
    model_name: str
    model_fingerprint: str
    inference_ms: float
    timestamp: str

    def to_json_obj(self) -> dict:
        return {
            "probabilities": dict(self.probabilities),
            "predicted": self.predicted,
            "triage": self.triage,
            "model_name": self.model_name,
            "model_fingerprint": self.model_fingerprint,
            "inference_ms": self.inference_ms,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScreeningResult":
        return cls(
            probabilities={str(k): float(v) for k, v in obj["probabilities"].items()},
            predicted=str(obj["predicted"]),
            triage=str(obj["triage"]),
            model_name=str(obj["model_name"]),
            model_fingerprint=str(obj["model_fingerprint"]),
            inference_ms=float(obj["inference_ms"]),
            timestamp=str(obj["timestamp"]),
        )


def screen_image(model: ModelContainer, image_bytes: bytes,
                 threshold: float = DEFAULT_THRESHOLD,
                 review_floor: float = DEFAULT_REVIEW_FLOOR,
                 path: str = "auto") -> ScreeningResult:
    """Run the full screening pipeline on encoded image bytes."""
    img = decode(image_bytes)
    t0 = time.perf_counter()
    tensor = preprocess(img, model.metadata)
    probs, _ = execute(model, tensor, capture=False, path=path)
    elapsed_ms = (time.perf_counter() - t0) * 1000.0

    names = model.metadata.class_names
    prob_map = {name: float(p) for name, p in zip(names, probs)}
    predicted = max(names, key=lambda n: (prob_map[n], -names.index(n)))
    target = "mpox" if "mpox" in names else names[0]
    return ScreeningResult(
        probabilities=prob_map,
        predicted=predicted,
        triage=triage_rule(prob_map, target=target, threshold=threshold,
                           review_floor=review_floor),
        model_name=model.metadata.model_name,
        model_fingerprint=model.metadata.source_fingerprint,
        inference_ms=round(elapsed_ms, 3),
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


@dataclass(frozen=True)
class CaseLogEntry:
    case_id: str
    result: ScreeningResult
    operator_decision: str = "pending"
    notes: str = ""

    def __post_init__(self):
        if not self.case_id:
            raise ScreeningError("case_id must be non-empty")
        if self.operator_decision not in OPERATOR_DECISIONS:
            raise ScreeningError(
                f"unknown operator decision '{self.operator_decision}'; "
                f"expected one of {OPERATOR_DECISIONS}")

    def to_json_obj(self) -> dict:
        return {
            "case_id": self.case_id,
            "result": self.result.to_json_obj(),
            "operator_decision": self.operator_decision,
            "notes": self.notes,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CaseLogEntry":
        return cls(
            case_id=str(obj["case_id"]),
            result=ScreeningResult.from_json_obj(obj["result"]),
            operator_decision=str(obj["operator_decision"]),
            notes=str(obj.get("notes", "")),
        )


@dataclass
class SessionLog:
    """Append-only JSONL case log.

    case_id is unique at creation time; a decision update on a pending
    case appends a superseding line rather than rewriting history, and
    readers take the last line per case_id.
    """

    path: object  # pathlib.Path
    entries: dict[str, CaseLogEntry] = field(default_factory=dict)

    def __post_init__(self):
        from pathlib import Path
        self.path = Path(self.path)
        if self.path.exists():
            for lineno, line in enumerate(
                    self.path.read_text(encoding="utf-8").splitlines(), 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = CaseLogEntry.from_json_obj(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError) as e:
                    raise ScreeningError(
                        f"{self.path}:{lineno}: corrupt session log line: {e}") from e
                self.entries[entry.case_id] = entry

    def append(self, entry: CaseLogEntry):
        if entry.case_id in self.entries:
            raise ScreeningError(f"case_id '{entry.case_id}' already logged this session")
        self._write(entry)

    def update_decision(self, case_id: str, decision: str, notes: str = "") -> CaseLogEntry:
        existing = self.entries.get(case_id)
        if existing is None:
            raise ScreeningError(f"unknown case_id '{case_id}'")
        if existing.operator_decision != "pending":
            raise ScreeningError(
                f"case '{case_id}' already decided as '{existing.operator_decision}'")
        updated = CaseLogEntry(case_id=case_id, result=existing.result,
                               operator_decision=decision,
                               notes=notes or existing.notes)
        self._write(updated)
        return updated

    def _write(self, entry: CaseLogEntry):
        line = json.dumps(entry.to_json_obj(), ensure_ascii=False)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        self.entries[entry.case_id] = entry

    def get(self, case_id: str) -> CaseLogEntry | None:
        return self.entries.get(case_id)

    def cases(self) -> list[CaseLogEntry]:
        return list(self.entries.values())
