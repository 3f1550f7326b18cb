import pytest
from hypothesis import HealthCheck, settings

from spikeobs.config import load_model

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def model():
    return load_model()
