import numpy as np
import pytest

from faceprobe.synth import synth_head


@pytest.fixture(scope="session")
def head():
    return synth_head(0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
