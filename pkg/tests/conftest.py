import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from radcurv.sphere_chart import DomainSpec, build_grid

settings.register_profile("radcurv", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("radcurv")

CAP = DomainSpec("cap", theta0=np.pi / 3)


@pytest.fixture(scope="session")
def cap():
    return CAP


@pytest.fixture(scope="session")
def grid17():
    return build_grid(CAP, 17, 32)


@pytest.fixture(scope="session")
def grid33():
    return build_grid(CAP, 33, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
