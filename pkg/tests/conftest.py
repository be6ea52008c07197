import numpy as np
import pytest

import shapeseg as ss


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cochlea_shape():
    return ss.CochleaShape()


@pytest.fixture(scope="session")
def small_grid():
    """A coarse 3-D grid around the default cochlea, cheap to evaluate."""
    return ss.Volume.zeros((30, 25, 25), (0.4, 0.4, 0.4), (-6.0, -5.0, -2.5))
