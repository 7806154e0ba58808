import numpy as np
import pytest

from smilecast.panels import CurvePanel, DeltaGrid
from smilecast.synth import default_grid


@pytest.fixture
def grid() -> DeltaGrid:
    return default_grid()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def make_panel(values, grid=None, label="1M"):
    values = np.asarray(values, dtype=float)
    grid = grid or default_grid()
    dates = np.array([f"d{i:06d}" for i in range(values.shape[0])])
    return CurvePanel(grid, dates, values, maturity_label=label)
