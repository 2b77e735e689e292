"""Command line entry points: msl-export and msl-golden.

Checkpoints are full pickled modules (torch.save(model, path)) or
dicts holding one under a ``model`` key; bare state_dicts carry no
architecture and are rejected. Deployment metadata the checkpoint
lacks (class names, input geometry, preprocessing) comes from a JSON
file or flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch
import torch.nn as nn

from mpoxscreen.model_io import load_model, validate_envelope

from .convert import ExportError, ExportMeta, export
from .golden import emit_golden_file

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _err(prog: str, msg: str):
    print(f"{prog}: {msg}", file=sys.stderr)


def load_checkpoint(path: str) -> nn.Module:
    try:
        obj = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, ValueError, ModuleNotFoundError) as e:
        raise ExportError(f"cannot load checkpoint '{path}': {e}") from e
    if isinstance(obj, dict):
        obj = obj.get("model")
    if not isinstance(obj, nn.Module):
        raise ExportError(
            f"checkpoint '{path}' does not hold a module; save the full model "
            "(torch.save(model, path)), not a bare state_dict")
    return obj.eval()


def build_meta(args) -> ExportMeta:
    obj: dict = {}
    if args.meta:
        try:
            obj = json.loads(Path(args.meta).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise ExportError(f"cannot read metadata '{args.meta}': {e}") from e
    if args.name:
        obj["model_name"] = args.name
    if args.classes:
        obj["class_names"] = [c.strip() for c in args.classes.split(",") if c.strip()]
    if args.input_size:
        try:
            h, w = (int(v) for v in args.input_size.lower().split("x"))
        except ValueError:
            raise ExportError(f"--input-size must look like 224x224, got '{args.input_size}'")
        obj["input_height"], obj["input_width"] = h, w
    if args.fingerprint:
        obj["source_fingerprint"] = args.fingerprint
    return ExportMeta.from_json_obj(obj)


def _meta_flags(p: argparse.ArgumentParser):
    p.add_argument("--meta", help="JSON file with model_name, class_names, input geometry")
    p.add_argument("--name", help="model name (overrides --meta)")
    p.add_argument("--classes", help="comma-separated class names (overrides --meta)")
    p.add_argument("--input-size", help="HxW, e.g. 224x224 (overrides --meta)")
    p.add_argument("--fingerprint", help="source fingerprint string")


def main_export(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="msl-export",
        description="Convert a torch classify checkpoint into an MSLW container.")
    parser.add_argument("checkpoint")
    parser.add_argument("out")
    _meta_flags(parser)
    args = parser.parse_args(argv)

    try:
        module = load_checkpoint(args.checkpoint)
        container = export(module, args.out, build_meta(args))
    except ExportError as e:
        _err("msl-export", str(e))
        return EXIT_ERROR

    loaded = load_model(args.out)
    report = validate_envelope(loaded)
    print(f"wrote {args.out}: {container.metadata.param_count:,} params, "
          f"{len(container.nodes)} nodes, {report.file_size_bytes:,} bytes")
    for msg in report.messages:
        print(f"envelope: {msg}", file=sys.stderr)
    return EXIT_OK


def main_golden(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="msl-golden",
        description="Emit a golden activation bundle for a checkpoint and image.")
    parser.add_argument("checkpoint")
    parser.add_argument("image")
    parser.add_argument("out")
    _meta_flags(parser)
    parser.add_argument("--model", help="exported .mslw to cross-check the bundle hash against")
    args = parser.parse_args(argv)

    try:
        module = load_checkpoint(args.checkpoint)
        meta = build_meta(args)
        n = emit_golden_file(module, meta, args.image, args.out)
    except (ExportError, OSError) as e:
        _err("msl-golden", str(e))
        return EXIT_ERROR

    if args.model:
        import hashlib

        from .convert import convert
        container, _ = convert(module, meta)
        actual = hashlib.sha256(Path(args.model).read_bytes()).hexdigest()
        if actual != container.sha256():
            _err("msl-golden", f"bundle does not match '{args.model}': differing container hash")
            return EXIT_ERROR

    print(f"wrote {args.out}: {n:,} bytes")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main_export())
