from __future__ import annotations

import sys
from pathlib import Path

import pytest

from mpoxscreen.model_io import load_model

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_terminal_summary(terminalreporter):
    """Reprint the acceptance verdict lines after the capture-heavy run."""
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None) if module else None
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def tiny_model():
    return load_model(FIXTURES / "tiny.mslw")


@pytest.fixture(scope="session")
def tiny_model_path() -> Path:
    return FIXTURES / "tiny.mslw"


@pytest.fixture(scope="session")
def lesion_png() -> bytes:
    return (FIXTURES / "images" / "lesion_300x200.png").read_bytes()
