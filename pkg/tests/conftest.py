import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cel.catalog import catalog_get  # noqa: E402
from cel.cli import sample_points  # noqa: E402


def points_for(name: str, count: int, seed: int = 0) -> np.ndarray:
    return sample_points(catalog_get(name).spec, count, seed)


@pytest.fixture
def no_parallel(monkeypatch):
    monkeypatch.setenv("CEL_NO_PARALLEL", "1")
