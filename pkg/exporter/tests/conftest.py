import sys
from pathlib import Path

import pytest
import torch

REPO_ROOT = Path(__file__).resolve().parents[2]
FIXTURE_IMAGES = REPO_ROOT / "tests" / "fixtures" / "images"


@pytest.fixture(scope="session", autouse=True)
def _torch_determinism():
    torch.set_num_threads(1)
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def lesion_png() -> bytes:
    return (FIXTURE_IMAGES / "lesion_300x200.png").read_bytes()


def pytest_terminal_summary(terminalreporter):
    """Reprint the acceptance verdict lines after the capture-heavy run."""
    module = sys.modules.get("test_acceptance_export")
    verdicts = getattr(module, "VERDICTS", None) if module else None
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
