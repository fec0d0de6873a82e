import pathlib

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

DEMOS = pathlib.Path(__file__).resolve().parents[1] / "src" / "xasim" / "demos"


@pytest.fixture
def demo_dir():
    return DEMOS


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
