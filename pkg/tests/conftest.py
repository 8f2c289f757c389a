import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blowup_lab.core_model import Nonlinearity
from blowup_lab.profile import scan_alphas

settings.register_profile("lab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

# First N=3 exponential profile.  Independently reproduced with a scipy
# DOP853 shot (rtol 1e-13): the tail leaves on opposite sides at
# alpha*(1 -/+ 1e-9), and a tail fit on [5, 8] gives C = 0.2858604.
ALPHA_N3 = 5.515122784578970
C_N3 = 0.2858604


@pytest.fixture(scope="session")
def exp_nl():
    return Nonlinearity.exponential()


@pytest.fixture(scope="session")
def n3_profile(exp_nl):
    """First candidate of the N=3 scan (refined root, shot to r = 10)."""
    return scan_alphas(exp_nl, 3).candidates[0]


@pytest.fixture
def rng():
    return np.random.default_rng(7)
