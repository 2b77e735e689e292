"""Command-line interface.

Subcommands: infer, eval, dataset (ingest | split | dedup), report,
serve, model (inspect). The model path defaults to the MSL_MODEL
environment variable wherever --model is accepted.

Exit codes for infer: 0 success, 2 unusable model, 3 unusable image.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import datasets, metrics
from .figures import render_confusion_figure, render_interval_figure
from .imaging import ImageError
from .model_io import ContainerError, load_model, validate_envelope
from .screening import (
    DEFAULT_REVIEW_FLOOR,
    DEFAULT_THRESHOLD,
    screen_image,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BAD_MODEL = 2
EXIT_BAD_IMAGE = 3


def _err(msg: str):
    print(f"msl: {msg}", file=sys.stderr)


def _model_path(args) -> str | None:
    return args.model or os.environ.get("MSL_MODEL")


def _load_model_checked(args):
    path = _model_path(args)
    if not path:
        _err("no model given; use --model or set MSL_MODEL")
        raise SystemExit(EXIT_BAD_MODEL)
    try:
        return load_model(path)
    except (ContainerError, OSError) as e:
        _err(f"cannot load model '{path}': {e}")
        raise SystemExit(EXIT_BAD_MODEL) from e


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def cmd_infer(args) -> int:
    model = _load_model_checked(args)
    try:
        data = Path(args.image).read_bytes()
    except OSError as e:
        _err(f"cannot read image '{args.image}': {e}")
        return EXIT_BAD_IMAGE
    try:
        result = screen_image(model, data, threshold=args.threshold,
                              review_floor=args.review_floor, path=args.path)
    except (ImageError, ValueError) as e:
        _err(f"cannot screen image '{args.image}': {e}")
        return EXIT_BAD_IMAGE

    if args.json:
        print(json.dumps(result.to_json_obj(), ensure_ascii=False))
    else:
        print(f"model:      {result.model_name}")
        for name in model.metadata.class_names:
            print(f"p({name}): {result.probabilities[name]:.6f}")
        print(f"predicted:  {result.predicted}")
        print(f"triage:     {result.triage}")
        print(f"time:       {result.inference_ms:.1f} ms")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    model = _load_model_checked(args)
    try:
        manifest = datasets.DatasetManifest.load(args.manifest)
    except (datasets.DatasetError, OSError) as e:
        _err(f"cannot load manifest '{args.manifest}': {e}")
        return EXIT_ERROR

    records = sorted((r for r in manifest.records if r.split == args.split),
                     key=lambda r: r.id)
    if not records:
        _err(f"manifest has no records with split '{args.split}'")
        return EXIT_ERROR

    root = Path(args.root) if args.root else Path(args.manifest).parent
    true_labels: list[str] = []
    predicted: list[str] = []
    skipped = 0
    for i, rec in enumerate(records, 1):
        print(f"\r[{i}/{len(records)}] {rec.id}", end="", file=sys.stderr, flush=True)
        try:
            data = (root / rec.path).read_bytes()
            result = screen_image(model, data, path=args.path)
        except (OSError, ValueError) as e:
            skipped += 1
            print(file=sys.stderr)
            _err(f"skipping '{rec.id}': {e}")
            if skipped > args.max_skip:
                _err(f"more than --max-skip {args.max_skip} unreadable records")
                return EXIT_ERROR
            continue
        true_labels.append(rec.label)
        predicted.append(result.predicted)
    print(file=sys.stderr)

    try:
        cm = metrics.confusion(true_labels, predicted,
                               class_names=model.metadata.class_names)
        payload = metrics.emit_report(cm, args.target_class, "json")
    except metrics.MetricsError as e:
        _err(str(e))
        return EXIT_ERROR

    if args.report:
        Path(args.report).write_bytes(payload)
        _err(f"wrote {args.report}")
    else:
        sys.stdout.buffer.write(payload)
    if args.table:
        sys.stdout.buffer.write(metrics.emit_report(cm, args.target_class, "text-table"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# dataset subcommands
# ---------------------------------------------------------------------------

def cmd_dataset_ingest(args) -> int:
    try:
        result = datasets.ingest(args.source, provenance=args.provenance)
    except datasets.DatasetError as e:
        _err(str(e))
        return EXIT_ERROR
    for warning in result.skipped:
        _err(f"skipped {warning}")
    result.manifest.save(args.out)
    print(f"wrote {args.out}: {len(result.manifest.records)} records, "
          f"{len(result.skipped)} skipped")
    return EXIT_OK


def cmd_dataset_split(args) -> int:
    try:
        manifest = datasets.DatasetManifest.load(args.manifest)
        ratios = {"train": args.train, "val": args.val, "test": args.test}
        out = datasets.split(manifest, ratios=ratios,
                             synthetic_fraction=args.synthetic_fraction,
                             seed=args.seed)
    except (datasets.DatasetError, OSError) as e:
        _err(str(e))
        return EXIT_ERROR
    out.save(args.out)
    for split_name in datasets.SPLITS:
        bucket = out.by_split(split_name)
        synth = sum(1 for r in bucket if r.source == "synthetic")
        print(f"{split_name}: {len(bucket)} records ({synth} synthetic)")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_dataset_dedup(args) -> int:
    try:
        a = datasets.DatasetManifest.load(args.manifest_a)
        b = datasets.DatasetManifest.load(args.manifest_b)
        report = datasets.dedup_check(a, b, hamming_threshold=args.threshold)
    except (datasets.DatasetError, OSError) as e:
        _err(str(e))
        return EXIT_ERROR
    payload = json.dumps(report.to_json_obj(), indent=2, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        _err(f"wrote {args.out}")
    else:
        sys.stdout.write(payload)
    print(f"exact: {len(report.exact)}, near: {len(report.near)} "
          f"(threshold {report.threshold})", file=sys.stderr)
    return EXIT_OK if report.clean else EXIT_ERROR


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _load_matrix(path: str) -> metrics.ConfusionMatrix:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if "confusion" in obj:  # an emitted diagnostics report
        return metrics.ConfusionMatrix(
            class_names=tuple(obj["class_names"]), counts=obj["confusion"])
    return metrics.ConfusionMatrix(
        class_names=tuple(obj["class_names"]), counts=obj["counts"])


def _report_csv(report: metrics.DiagnosticsReport) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class", "n", "precision", "precision_lo", "precision_hi",
                     "recall", "recall_lo", "recall_hi", "f1", "f1_lo", "f1_hi"])
    for name in report.class_names:
        m = report.per_class[name]
        row: list = [name, report.n_per_class.get(name, 0)]
        for key in ("precision", "recall", "f1"):
            est = m[key]
            row.extend(["" if v is None else f"{v:.6f}"
                        for v in (est.point, est.lo, est.hi)])
        writer.writerow(row)
    writer.writerow([])
    writer.writerow(["accuracy", report.n_total,
                     f"{report.accuracy.point:.6f}", f"{report.accuracy.lo:.6f}",
                     f"{report.accuracy.hi:.6f}", "", "", "", "", "", ""])
    return buf.getvalue().encode("utf-8")


def cmd_report(args) -> int:
    try:
        cm = _load_matrix(args.matrix)
        report = metrics.build_report(cm, args.target_class)
    except (metrics.MetricsError, OSError, KeyError, ValueError) as e:
        _err(f"cannot build report from '{args.matrix}': {e}")
        return EXIT_ERROR

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_bytes(
        metrics.emit_report(cm, args.target_class, "json"))
    (out_dir / "report.txt").write_bytes(
        metrics.emit_report(cm, args.target_class, "text-table"))
    (out_dir / "report.csv").write_bytes(_report_csv(report))
    if not args.no_figures:
        render_confusion_figure(report, out_dir / "confusion_matrix.png")
        render_interval_figure(report, out_dir / "intervals.png")
    sys.stdout.write(metrics.render_text_table(report))
    written = ["report.json", "report.txt", "report.csv"]
    if not args.no_figures:
        written += ["confusion_matrix.png", "intervals.png"]
    _err(f"wrote {', '.join(written)} to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    if args.host not in ("127.0.0.1", "localhost", "::1") and not args.allow_lan:
        _err(f"refusing to bind non-loopback host '{args.host}' without --allow-lan")
        return EXIT_ERROR
    if args.allow_lan:
        _err(f"warning: binding '{args.host}' exposes the service beyond this machine")

    model = _load_model_checked(args)
    static_dir = args.static_dir
    if static_dir is None:
        bundled = Path(__file__).parent / "ui_static"
        static_dir = bundled if bundled.is_dir() else None
    app = create_app(model, session_log_path=args.session_log,
                     threshold=args.threshold, review_floor=args.review_floor,
                     static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# model inspect
# ---------------------------------------------------------------------------

def cmd_model_inspect(args) -> int:
    model = _load_model_checked(args)
    envelope = validate_envelope(model)
    obj = {
        "model": model.describe(),
        "envelope": {
            "param_count": envelope.param_count,
            "param_range": list(envelope.param_range),
            "file_size_bytes": envelope.file_size_bytes,
            "file_size_limit": envelope.file_size_limit,
            "conforming": envelope.conforming,
            "messages": envelope.messages,
        },
    }
    if args.nodes:
        obj["nodes"] = [
            {"id": n.id, "kind": n.kind, "inputs": list(n.inputs),
             "attrs": dict(n.attrs),
             "weights": {k: list(v.shape) for k, v in sorted(n.weights.items())}}
            for n in model.nodes
        ]
    print(json.dumps(obj, indent=2, ensure_ascii=False))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def _add_model_arg(p: argparse.ArgumentParser):
    p.add_argument("--model", default=None,
                   help="model container path (default: $MSL_MODEL)")


def _add_triage_args(p: argparse.ArgumentParser):
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="p(mpox) at or above this screens positive")
    p.add_argument("--review-floor", type=float, default=DEFAULT_REVIEW_FLOOR,
                   help="p(mpox) at or above this forces a review")


def _add_path_arg(p: argparse.ArgumentParser):
    p.add_argument("--path", choices=("auto", "optimized", "reference"),
                   default="auto", help="convolution implementation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msl", description="offline mpox screening toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="screen one image")
    _add_model_arg(p)
    p.add_argument("--image", required=True)
    p.add_argument("--json", action="store_true", help="emit one JSON object")
    _add_triage_args(p)
    _add_path_arg(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate a model over a manifest split")
    _add_model_arg(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=datasets.SPLITS)
    p.add_argument("--target-class", default="mpox")
    p.add_argument("--report", default=None, help="write JSON report here")
    p.add_argument("--table", action="store_true", help="also print the text table")
    p.add_argument("--root", default=None, help="base directory for record paths")
    p.add_argument("--max-skip", type=int, default=0)
    _add_path_arg(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dataset", help="manifest tooling")
    dsub = p.add_subparsers(dest="dataset_command", required=True)

    d = dsub.add_parser("ingest", help="build a manifest from a tree or listing")
    d.add_argument("source")
    d.add_argument("--out", required=True)
    d.add_argument("--provenance", default="")
    d.set_defaults(func=cmd_dataset_ingest)

    d = dsub.add_parser("split", help="assign train/val/test")
    d.add_argument("--manifest", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--train", type=float, default=datasets.DEFAULT_RATIOS["train"])
    d.add_argument("--val", type=float, default=datasets.DEFAULT_RATIOS["val"])
    d.add_argument("--test", type=float, default=datasets.DEFAULT_RATIOS["test"])
    d.add_argument("--synthetic-fraction", type=float,
                   default=datasets.DEFAULT_SYNTHETIC_FRACTION)
    d.set_defaults(func=cmd_dataset_split)

    d = dsub.add_parser("dedup", help="cross-check two manifests for duplicates")
    d.add_argument("--manifest-a", required=True)
    d.add_argument("--manifest-b", required=True)
    d.add_argument("--threshold", type=int,
                   default=datasets.DEFAULT_HAMMING_THRESHOLD)
    d.add_argument("--out", default=None, help="write the JSON report here")
    d.set_defaults(func=cmd_dataset_dedup)

    p = sub.add_parser("report", help="render reports and figures from a matrix")
    p.add_argument("--matrix", required=True,
                   help="JSON with class_names + counts, or an eval report")
    p.add_argument("--target-class", default="mpox")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the loopback screening service")
    _add_model_arg(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--session-log", default="msl_session.jsonl")
    p.add_argument("--allow-lan", action="store_true",
                   help="permit binding a non-loopback host")
    p.add_argument("--static-dir", default=None,
                   help="serve these files at / (defaults to the bundled UI)")
    _add_triage_args(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("model", help="model tooling")
    msub = p.add_subparsers(dest="model_command", required=True)
    m = msub.add_parser("inspect", help="print metadata, envelope, and nodes")
    _add_model_arg(m)
    m.add_argument("--nodes", action="store_true", help="include the node table")
    m.set_defaults(func=cmd_model_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
