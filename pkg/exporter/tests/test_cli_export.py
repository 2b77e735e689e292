"""CLI surface: msl-export and msl-golden entry points."""

import json

import pytest
import torch

from mpoxscreen.model_io import load_model

from msl_exporter.cli import EXIT_ERROR, EXIT_OK, main_export, main_golden
from util_torch import DetectionHead, make_tiny


@pytest.fixture()
def ckpt(tmp_path):
    path = tmp_path / "tiny.pt"
    torch.save(make_tiny(), path)
    return path


@pytest.fixture()
def meta_json(tmp_path):
    path = tmp_path / "meta.json"
    path.write_text(json.dumps({
        "model_name": "cli-tiny",
        "class_names": ["mpox", "other_skin", "normal"],
        "input_height": 32,
        "input_width": 32,
        "source_fingerprint": "cli-fp",
    }))
    return path


def test_export_with_meta_file(ckpt, meta_json, tmp_path, capsys):
    out = tmp_path / "tiny.mslw"
    rc = main_export([str(ckpt), str(out), "--meta", str(meta_json)])
    assert rc == EXIT_OK
    loaded = load_model(out)
    assert loaded.metadata.model_name == "cli-tiny"
    assert loaded.metadata.source_fingerprint == "cli-fp"
    stdout = capsys.readouterr().out
    assert "1,591 params" in stdout
    assert "17 nodes" in stdout


def test_export_with_flags_only(ckpt, tmp_path):
    out = tmp_path / "tiny.mslw"
    rc = main_export([str(ckpt), str(out), "--name", "flag-tiny",
                      "--classes", "mpox,other_skin,normal",
                      "--input-size", "32x32"])
    assert rc == EXIT_OK
    assert load_model(out).metadata.model_name == "flag-tiny"


def test_flags_override_meta_file(ckpt, meta_json, tmp_path):
    out = tmp_path / "tiny.mslw"
    rc = main_export([str(ckpt), str(out), "--meta", str(meta_json),
                      "--name", "override"])
    assert rc == EXIT_OK
    assert load_model(out).metadata.model_name == "override"


def test_bad_input_size(ckpt, meta_json, tmp_path, capsys):
    rc = main_export([str(ckpt), str(tmp_path / "x.mslw"),
                      "--meta", str(meta_json), "--input-size", "big"])
    assert rc == EXIT_ERROR
    assert "224x224" in capsys.readouterr().err


def test_state_dict_checkpoint_rejected(tmp_path, meta_json, capsys):
    path = tmp_path / "sd.pt"
    torch.save(make_tiny().state_dict(), path)
    rc = main_export([str(path), str(tmp_path / "x.mslw"), "--meta", str(meta_json)])
    assert rc == EXIT_ERROR
    assert "state_dict" in capsys.readouterr().err


def test_dict_checkpoint_with_model_key(tmp_path, meta_json):
    path = tmp_path / "wrapped.pt"
    torch.save({"model": make_tiny(), "epoch": 3}, path)
    out = tmp_path / "tiny.mslw"
    assert main_export([str(path), str(out), "--meta", str(meta_json)]) == EXIT_OK
    assert out.exists()


def test_detection_checkpoint_rejected(tmp_path, meta_json, capsys):
    path = tmp_path / "det.pt"
    torch.save(DetectionHead().eval(), path)
    rc = main_export([str(path), str(tmp_path / "x.mslw"), "--meta", str(meta_json)])
    assert rc == EXIT_ERROR
    assert "Upsample" in capsys.readouterr().err


def test_missing_checkpoint(tmp_path, meta_json, capsys):
    rc = main_export([str(tmp_path / "absent.pt"), str(tmp_path / "x.mslw"),
                      "--meta", str(meta_json)])
    assert rc == EXIT_ERROR
    assert "cannot load checkpoint" in capsys.readouterr().err


def test_golden_cli_with_model_crosscheck(ckpt, meta_json, tmp_path, lesion_png):
    img = tmp_path / "lesion.png"
    img.write_bytes(lesion_png)
    model_out = tmp_path / "tiny.mslw"
    assert main_export([str(ckpt), str(model_out), "--meta", str(meta_json)]) == EXIT_OK

    bundle_out = tmp_path / "tiny.mslg"
    rc = main_golden([str(ckpt), str(img), str(bundle_out),
                      "--meta", str(meta_json), "--model", str(model_out)])
    assert rc == EXIT_OK
    assert bundle_out.exists()


def test_golden_cli_crosscheck_detects_mismatch(ckpt, meta_json, tmp_path,
                                                lesion_png, capsys):
    img = tmp_path / "lesion.png"
    img.write_bytes(lesion_png)
    wrong = tmp_path / "wrong.mslw"
    wrong.write_bytes(b"MSLW" + b"\x00" * 64)
    rc = main_golden([str(ckpt), str(img), str(tmp_path / "t.mslg"),
                      "--meta", str(meta_json), "--model", str(wrong)])
    assert rc == EXIT_ERROR
    assert "differing container hash" in capsys.readouterr().err
