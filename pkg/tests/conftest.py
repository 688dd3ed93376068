import numpy as np
import pytest

from rssloc.channel import PlmParams
from rssloc.scenario import make_corridor_scenario


@pytest.fixture
def corridor():
    return make_corridor_scenario(6, 86.3, 2.8, 2.5, 0.5)


@pytest.fixture
def channel_params():
    return PlmParams(p0=-30.9, beta=1.82, sigma2_db=11.83, d_cor=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
