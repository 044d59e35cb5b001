import numpy as np
import pytest

from nodereg.grid.types import Image, VoxelCloud, identity_coords


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def smooth_image():
    """Factory for smooth random-looking images of a given shape"""

    def make(shape, seed=0):
        r = np.random.default_rng(seed)
        grid = identity_coords(shape)
        values = np.zeros(shape)
        for _ in range(3):
            freq = r.uniform(0.2, 0.7, size=len(shape))
            phase = r.uniform(0, 2 * np.pi)
            values += np.sin(sum(f * g for f, g in zip(freq, grid)) + phase)
        return Image((values - values.min()) / (values.max() - values.min()))

    return make


@pytest.fixture
def random_cloud():
    """Factory for identity plus uniform noise of the given amplitude"""

    def make(shape, amplitude=0.3, seed=0):
        r = np.random.default_rng(seed)
        coords = identity_coords(shape) + r.uniform(-amplitude, amplitude, size=(len(shape),) + tuple(shape))
        return VoxelCloud(coords)

    return make
