import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def rng():
    return np.random.default_rng(987)


@pytest.fixture
def scene_png(tmp_path, rng):
    """A 64x64 test image with a colored block on a dark background."""
    data = np.full((64, 64, 3), (20, 20, 160), dtype=np.uint8)
    data[16:40, 16:40] = (210, 30, 30)
    path = tmp_path / "scene.png"
    Image.fromarray(data, mode="RGB").save(path)
    return path
