import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from morphforge.imaging import FaceImage  # noqa: E402
from morphforge.synthetic import write_synthetic_dataset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_image(rng, h=16, w=16):
    return FaceImage.from_array(rng.random((h, w, 3)))


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    """32 identities, one reference and two probes each, 64x64."""
    root = tmp_path_factory.mktemp("synthetic")
    return write_synthetic_dataset(root, n_identities=32, size=64, seed=0)


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, text = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")
