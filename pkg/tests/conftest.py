import numpy as np
import pytest
from hypothesis import settings

from refab.experiments import minifab_params

settings.register_profile("refab", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("refab")


@pytest.fixture(scope="session")
def fab():
    return minifab_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
