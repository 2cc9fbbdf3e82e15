import numpy as np
import pytest

from chipent import config


@pytest.fixture(scope="session")
def cfg():
    return config.default_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
