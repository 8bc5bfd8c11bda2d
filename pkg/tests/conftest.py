import os

import numpy as np
import pytest
from hypothesis import settings

from obstaclewatch.signal_core import BeepConfig

settings.register_profile("default", deadline=None, max_examples=60)
settings.register_profile("ci", deadline=None, max_examples=25)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def beep():
    return BeepConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
