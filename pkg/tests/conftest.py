import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from modules.lp_core import InstanceSpec, LpInstance, generate_instance  # noqa: E402


@pytest.fixture
def tiny_lp():
    """min x1 + 2 x2  s.t. x1 + x2 = 1, x >= 0; optimum x = (1, 0), y = 1."""
    return LpInstance(A=np.array([[1.0, 1.0]]), b=np.array([1.0]), c=np.array([1.0, 2.0]), name='tiny')


@pytest.fixture
def small_instance():
    return generate_instance(InstanceSpec(n=8, m=4, seed=0))


@pytest.fixture
def medium_instance():
    return generate_instance(InstanceSpec(n=16, m=8, seed=3))


@pytest.fixture
def degenerate_instance():
    return generate_instance(InstanceSpec(n=12, m=4, degenerate=True, seed=1))
