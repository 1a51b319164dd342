import os

import pytest
from hypothesis import HealthCheck, settings

from u1corr.library import jc_model

settings.register_profile(
    "u1corr", max_examples=100, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("U1CORR_HYPOTHESIS_PROFILE", "u1corr"))


@pytest.fixture
def jc():
    return jc_model()
