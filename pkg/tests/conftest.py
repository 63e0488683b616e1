import numpy as np
import pytest

from aggdiff import Grid2D, ModelSpec


@pytest.fixture
def grid9():
    return Grid2D(nx=9, ny=9)


@pytest.fixture
def grid17():
    return Grid2D(nx=17, ny=17)


@pytest.fixture
def grid33():
    return Grid2D(nx=33, ny=33)


@pytest.fixture
def spec_default():
    return ModelSpec()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
