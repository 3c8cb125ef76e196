import numpy as np
import pytest

from nelsonfp.core import UNIT_PARAMS, derive_params

# a deliberately "unround" unit system: sigma0, D, omega all differ from 1
ODD_PARAMS = derive_params(1.3, 0.7, 0.9)


@pytest.fixture(params=["unit", "odd"])
def params(request):
    return UNIT_PARAMS if request.param == "unit" else ODD_PARAMS


@pytest.fixture
def odd_params():
    return ODD_PARAMS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
