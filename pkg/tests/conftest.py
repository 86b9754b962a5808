import numpy as np
import pytest

from psisloo import oracle


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def normal_model():
    return oracle.simulate(100, seed=3)


@pytest.fixture(scope="session")
def normal_draws(normal_model):
    return oracle.sample_loglik(normal_model, 4000, seed=7)
