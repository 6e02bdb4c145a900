import numpy as np
import pytest

from threshova.design import encode_factor


def oneway(T, R):
    return encode_factor(np.repeat(np.arange(T), R))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
