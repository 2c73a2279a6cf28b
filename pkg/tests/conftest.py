import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ovhardy.field_core import GridSpec, SampledField

settings.register_profile(
    "ovhardy",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("ovhardy")


@pytest.fixture
def grid1():
    return GridSpec(1, 2, 32.0, 1024)


@pytest.fixture
def small_grid1():
    return GridSpec(1, 2, 16.0, 256)


@pytest.fixture
def grid2():
    return GridSpec(2, 2, 16.0, 64)


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    shape = grid.field_shape
    return SampledField(grid, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
