import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adaptcd.imaging import Image


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_image(rng, h=32, w=32, low=0, high=256):
    return Image(rng.integers(low, high, size=(h, w, 3), dtype=np.int64).astype(np.uint8))
