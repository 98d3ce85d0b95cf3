import json

import numpy as np
import pkg_resources
import pytest

from fracground import field


@pytest.fixture(scope="function")
def run_config_document():
    """Return the desk-scale run configuration (N=2, s=0.5, p=2 on M=128, L=4)."""
    return json.loads(pkg_resources.resource_string("tests.resources", "run_config.json"))


@pytest.fixture(scope="function")
def rng():
    return np.random.default_rng(20240131)


@pytest.fixture(scope="session")
def line_grid():
    """Fine 1D grid on [-16, 16) with spacing 1/8."""
    return field.make_grid(1, 256, 16.0)


@pytest.fixture(scope="session")
def plane_grid():
    """2D grid on [-8, 8)^2 with spacing 1/8."""
    return field.make_grid(2, 128, 8.0)


@pytest.fixture(scope="function")
def line_gaussian(line_grid):
    """Return exp(-x^2 / 2) on the 1D grid."""
    return field.gaussian(line_grid)


@pytest.fixture(scope="function")
def plane_gaussian(plane_grid):
    """Return 2 exp(-|x|^2 / 2) on the 2D grid."""
    return field.gaussian(plane_grid, amplitude=2.0)
