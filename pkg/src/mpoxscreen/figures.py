"""Report figures: confusion-matrix heatmap and interval chart.

Rendered with the Agg backend so the CLI works headless; every figure
is derived from the same DiagnosticsReport object as the JSON and text
outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import DiagnosticsReport


def render_confusion_figure(report: DiagnosticsReport, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    counts = np.asarray(report.counts, dtype=np.int64)
    k = len(report.class_names)

    fig, ax = plt.subplots(figsize=(1.6 * k + 2.4, 1.6 * k + 1.6))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(k), labels=report.class_names, rotation=30, ha="right")
    ax.set_yticks(range(k), labels=report.class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"confusion matrix (n={report.n_total})")
    cutover = counts.max() / 2.0 if counts.max() else 0.5
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(int(counts[i, j])), ha="center", va="center",
                    color="white" if counts[i, j] > cutover else "black")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_interval_figure(report: DiagnosticsReport, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    metric_names = ("precision", "recall", "f1")
    k = len(report.class_names)
    fig, ax = plt.subplots(figsize=(2.0 * k + 3.0, 4.2))

    width = 0.8 / len(metric_names)
    for m_idx, metric in enumerate(metric_names):
        xs, points, lo_err, hi_err = [], [], [], []
        for c_idx, name in enumerate(report.class_names):
            est = report.per_class[name][metric]
            if est.point is None:
                continue
            xs.append(c_idx + (m_idx - 1) * width)
            points.append(est.point * 100.0)
            lo_err.append((est.point - est.lo) * 100.0)
            hi_err.append((est.hi - est.point) * 100.0)
        if xs:
            ax.errorbar(xs, points, yerr=[lo_err, hi_err], fmt="o",
                        capsize=4, label=metric)

    if report.accuracy.point is not None:
        ax.axhline(report.accuracy.point * 100.0, linestyle="--", linewidth=1.0,
                   color="gray",
                   label=f"accuracy {report.accuracy.point * 100.0:.1f}%")
    ax.set_xticks(range(k), labels=report.class_names)
    ax.set_ylabel("percent")
    ax.set_ylim(0, 102)
    ax.set_title("per-class metrics with 95% Wilson intervals")
    ax.legend(loc="lower left")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
