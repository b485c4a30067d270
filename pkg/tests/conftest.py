import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hivpip import ModelParams, TimeMesh

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def mesh14():
    return TimeMesh.uniform(300.0, 14)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
