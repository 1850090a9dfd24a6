import numpy as np
import pytest

from helpers import make_setup


@pytest.fixture
def toy():
    """The hand-derived walk-through: ce(0,0)=[2,0,0], ce(0,1)=[0,1,0], logits [[2,1]]."""
    return make_setup(fe=[[2, 1, 0]], weights=[[1, 0, 2], [0, 1, 1]], labels=[0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
