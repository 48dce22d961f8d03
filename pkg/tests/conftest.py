import numpy as np
import pytest

from quadfl.extended_model import VehicleParams
from quadfl.verification import VERIFY_INERTIA, sample_domain


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return VehicleParams(J=VERIFY_INERTIA)


@pytest.fixture
def samples(rng):
    return sample_domain(rng, 500)
