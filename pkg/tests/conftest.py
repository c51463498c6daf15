import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

GRID3 = np.array([[0, 5, 1], [2, 0, 3], [4, 2, 0]])


@pytest.fixture
def grid3():
    return GRID3.copy()
