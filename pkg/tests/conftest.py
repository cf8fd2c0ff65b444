import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bilinq.core import BilinearSystem, CostSpec
from bilinq.registry import hydraulic_system

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def scalar_sys():
    """n = m = 1 with A = 1, B = 1, D_1 = 0.5."""
    return BilinearSystem(A=[[1.0]], B=[[1.0]], D=[[[0.5]]])


@pytest.fixture
def hydraulic():
    return hydraulic_system()


@pytest.fixture
def hydraulic_cost():
    return CostSpec(np.eye(6), 0.9, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
