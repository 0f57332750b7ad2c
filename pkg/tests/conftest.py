import pytest
from hypothesis import HealthCheck, settings

from helpers import philox

settings.register_profile("ci", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture
def rng():
    return philox(12345)
