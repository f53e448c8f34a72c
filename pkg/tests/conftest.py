import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def trained():
    """(model, held-out accuracy) from the default corpus, trained once."""
    from markerforge.study import train_default
    return train_default(0)


@pytest.fixture(scope="session")
def model(trained):
    return trained[0]
