"""Evaluation battery: confusion matrix, per-class rates, one-vs-rest
diagnostics, Wilson 95% confidence intervals, and report emission.

All interval math uses the Wilson score interval. Division-by-zero
cases (a class never predicted and never true) yield an explicit
undefined marker (None), rendered as "n/a" in tables and null in JSON,
never a silent NaN.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from statistics import NormalDist

import numpy as np

REPORT_SCHEMA = "msl-diagnostics-report/v1"

# Two-sided 95% normal quantile, pinned so reports never drift with the
# platform's erf implementation.
_Z95 = 1.959964


class MetricsError(ValueError):
    pass


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise MetricsError("wilson_interval requires n >= 1")
    if not 0 <= successes <= n:
        raise MetricsError(f"successes {successes} outside [0, {n}]")
    if not 0.0 < confidence < 1.0:
        raise MetricsError(f"confidence {confidence} outside (0, 1)")
    if abs(confidence - 0.95) < 1e-12:
        z = _Z95
    else:
        z = NormalDist().inv_cdf((1.0 + confidence) / 2.0)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    class_names: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        k = len(self.class_names)
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (k, k):
            raise MetricsError(f"counts shape {c.shape} does not match {k} classes")
        if (c < 0).any():
            raise MetricsError("counts must be nonnegative")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_per_class(self) -> dict[str, int]:
        row = self.counts.sum(axis=1)
        return {name: int(row[i]) for i, name in enumerate(self.class_names)}

    def index_of(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            i = int(name_or_index)
            if not 0 <= i < len(self.class_names):
                raise MetricsError(f"class index {i} out of range")
            return i
        try:
            return self.class_names.index(str(name_or_index))
        except ValueError:
            raise MetricsError(
                f"unknown class '{name_or_index}'; known: {list(self.class_names)}") from None


def confusion(true_labels, predicted_labels, class_names=None) -> ConfusionMatrix:
    """Tally a confusion matrix from parallel label sequences.

    Labels may be class names or indices into class_names.
    """
    true_labels = list(true_labels)
    predicted_labels = list(predicted_labels)
    if len(true_labels) != len(predicted_labels):
        raise MetricsError(
            f"{len(true_labels)} true labels vs {len(predicted_labels)} predictions")
    if class_names is None:
        class_names = sorted({str(v) for v in true_labels + predicted_labels})
    names = tuple(str(n) for n in class_names)
    index = {n: i for i, n in enumerate(names)}

    def to_idx(v):
        if isinstance(v, (int, np.integer)):
            i = int(v)
            if not 0 <= i < len(names):
                raise MetricsError(f"label index {i} outside the declared class set")
            return i
        key = str(v)
        if key not in index:
            raise MetricsError(f"label '{key}' outside the declared class set {list(names)}")
        return index[key]

    counts = np.zeros((len(names), len(names)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        counts[to_idx(t), to_idx(p)] += 1
    return ConfusionMatrix(class_names=names, counts=counts)


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Elementwise addition; associative, for sharded evaluation."""
    if a.class_names != b.class_names:
        raise MetricsError(f"class sets differ: {a.class_names} vs {b.class_names}")
    return ConfusionMatrix(class_names=a.class_names, counts=a.counts + b.counts)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


@dataclass(frozen=True)
class ClassMetrics:
    precision: float | None
    recall: float | None
    f1: float | None


def class_counts(cm: ConfusionMatrix, index: int) -> tuple[int, int, int, int]:
    """One-vs-rest (TP, FP, FN, TN) for a class index."""
    tp = int(cm.counts[index, index])
    fp = int(cm.counts[:, index].sum()) - tp
    fn = int(cm.counts[index, :].sum()) - tp
    tn = cm.total - tp - fp - fn
    return tp, fp, fn, tn


def class_metrics(cm: ConfusionMatrix, class_index) -> ClassMetrics:
    i = cm.index_of(class_index)
    tp, fp, fn, _ = class_counts(cm, i)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    return ClassMetrics(precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class BinaryDiagnostics:
    sensitivity: float | None
    specificity: float | None
    tp: int
    fp: int
    fn: int
    tn: int


def binary_diagnostics(cm: ConfusionMatrix, target) -> BinaryDiagnostics:
    """Collapse to target-vs-rest sensitivity and specificity."""
    i = cm.index_of(target)
    tp, fp, fn, tn = class_counts(cm, i)
    return BinaryDiagnostics(
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
        tp=tp, fp=fp, fn=fn, tn=tn,
    )


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise MetricsError("accuracy undefined for an empty matrix")
    return float(np.trace(cm.counts)) / cm.total


def topk_accuracy(true_labels, probability_rows, k: int) -> float:
    """Fraction of rows whose true label sits in the k most probable
    classes; probability ties break toward the lower class index."""
    if k < 1:
        raise MetricsError("k must be at least 1")
    rows = np.asarray(probability_rows, dtype=np.float64)
    if rows.ndim != 2:
        raise MetricsError(f"probability rows must be 2-D, got shape {rows.shape}")
    truth = np.asarray(list(true_labels), dtype=np.int64)
    if truth.shape[0] != rows.shape[0]:
        raise MetricsError("label count does not match row count")
    if truth.size == 0:
        raise MetricsError("topk_accuracy requires at least one row")
    if truth.min() < 0 or truth.max() >= rows.shape[1]:
        raise MetricsError("true label index outside the class set")
    order = np.argsort(-rows, axis=1, kind="stable")
    hits = (order[:, :min(k, rows.shape[1])] == truth[:, None]).any(axis=1)
    return float(hits.mean())


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    """Point estimate with a 95% Wilson interval; all None when undefined."""
    point: float | None
    lo: float | None
    hi: float | None

    @classmethod
    def from_counts(cls, successes: int, n: int) -> "Estimate":
        if n == 0:
            return cls(None, None, None)
        lo, hi = wilson_interval(successes, n)
        return cls(successes / n, lo, hi)

    def to_json_obj(self):
        return {"point": self.point, "lo": self.lo, "hi": self.hi}


@dataclass
class DiagnosticsReport:
    class_names: tuple[str, ...]
    counts: np.ndarray
    n_total: int
    n_per_class: dict[str, int]
    accuracy: Estimate
    per_class: dict[str, dict[str, Estimate]]
    target_class: str
    sensitivity: Estimate
    specificity: Estimate
    supports: dict[str, int] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "class_names": list(self.class_names),
            "confusion": [[int(v) for v in row] for row in self.counts],
            "n_total": self.n_total,
            "n_per_class": dict(self.n_per_class),
            "accuracy": self.accuracy.to_json_obj(),
            "per_class": {
                name: {metric: est.to_json_obj() for metric, est in metrics.items()}
                for name, metrics in self.per_class.items()
            },
            "target": {
                "class": self.target_class,
                "sensitivity": self.sensitivity.to_json_obj(),
                "specificity": self.specificity.to_json_obj(),
            },
        }


def build_report(cm: ConfusionMatrix, target_class) -> DiagnosticsReport:
    """Single source of truth for every emitted format."""
    if cm.total == 0:
        raise MetricsError("cannot report on an empty confusion matrix")
    t_idx = cm.index_of(target_class)

    per_class: dict[str, dict[str, Estimate]] = {}
    for i, name in enumerate(cm.class_names):
        tp, fp, fn, _ = class_counts(cm, i)
        per_class[name] = {
            "precision": Estimate.from_counts(tp, tp + fp),
            "recall": Estimate.from_counts(tp, tp + fn),
            # Wilson applied to the F1-defining ratio 2TP / (2TP + FP + FN).
            "f1": Estimate.from_counts(2 * tp, 2 * tp + fp + fn),
        }

    tp, fp, fn, tn = class_counts(cm, t_idx)
    return DiagnosticsReport(
        class_names=cm.class_names,
        counts=cm.counts.copy(),
        n_total=cm.total,
        n_per_class=cm.n_per_class,
        accuracy=Estimate.from_counts(int(np.trace(cm.counts)), cm.total),
        per_class=per_class,
        target_class=cm.class_names[t_idx],
        sensitivity=Estimate.from_counts(tp, tp + fn),
        specificity=Estimate.from_counts(tn, tn + fp),
        supports=cm.n_per_class,
    )


def _pct(value: float | None) -> str:
    """Percentage to one decimal, half-up, matching report presentation."""
    if value is None:
        return "n/a"
    return str(Decimal(repr(value * 100.0)).quantize(Decimal("0.1"), ROUND_HALF_UP))


def _fmt_estimate(est: Estimate) -> str:
    if est.point is None:
        return "n/a"
    return f"{_pct(est.point)} ({_pct(est.lo)}-{_pct(est.hi)})"


def render_text_table(report: DiagnosticsReport) -> str:
    rows = [("class", "n", "precision (95% CI)", "recall (95% CI)", "f1 (95% CI)")]
    for name in report.class_names:
        m = report.per_class[name]
        rows.append((
            name,
            str(report.n_per_class.get(name, 0)),
            _fmt_estimate(m["precision"]),
            _fmt_estimate(m["recall"]),
            _fmt_estimate(m["f1"]),
        ))
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip()
             for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append("")
    lines.append(f"accuracy: {_fmt_estimate(report.accuracy)}  (n={report.n_total})")
    lines.append(
        f"target '{report.target_class}': "
        f"sensitivity {_fmt_estimate(report.sensitivity)}, "
        f"specificity {_fmt_estimate(report.specificity)}")
    return "\n".join(lines) + "\n"


def emit_report(cm: ConfusionMatrix, target_class, fmt: str = "json") -> bytes:
    report = build_report(cm, target_class)
    if fmt == "json":
        return (json.dumps(report.to_json_obj(), indent=2, ensure_ascii=False)
                + "\n").encode("utf-8")
    if fmt == "text-table":
        return render_text_table(report).encode("utf-8")
    raise MetricsError(f"unknown report format '{fmt}'; use json or text-table")
