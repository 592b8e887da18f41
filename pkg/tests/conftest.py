import numpy as np
import pytest

from semloc import CameraModel, OccupancyGrid, SemanticVoxelGrid, OCCUPIED


@pytest.fixture
def wall_world():
    """10 m x 10 m free grid with one occupied wall column at x = 5.0 m."""
    occ = OccupancyGrid(100, 100, resolution=0.1)
    occ.cells[:, 50] = OCCUPIED
    occ.invalidate()
    return occ


@pytest.fixture
def camera():
    return CameraModel()


def make_semantic(occ, **kw):
    return SemanticVoxelGrid.covering(occ, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
