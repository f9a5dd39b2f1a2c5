import numpy as np
import pytest

from partinv.sensing import RngStream


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def stream():
    return RngStream(11, (0,))
