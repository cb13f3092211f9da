import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from services.config import GridConfig  # noqa: E402
from services.geometry import BoundaryCoefficients, Grid2D  # noqa: E402
from services.geometry.calculus import stream_velocity  # noqa: E402
from services.geometry.fields import Field  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run acceptance-size tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-size run, skipped unless --run-slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def grid():
    return Grid2D.from_config(GridConfig(nx=24, ny=16))


@pytest.fixture
def square_grid():
    return Grid2D.from_config(GridConfig(nx=32, ny=32))


@pytest.fixture
def coeffs(grid):
    return BoundaryCoefficients.uniform(grid, friction=0.5, heat=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_stream(grid, modes=((1, 1, 1.0), (2, 1, 0.5), (1, 3, -0.25)), amplitude=1.0):
    """Node stream function vanishing on the walls"""
    x, y = grid.coordinates("node")
    psi = np.zeros_like(x)
    for kx, ky, a in modes:
        psi += a * np.sin(kx * np.pi * x / grid.lx) * np.sin(ky * np.pi * y / grid.ly)
    return amplitude * psi


def divergence_free(grid, amplitude=1.0, modes=None):
    psi = smooth_stream(grid, amplitude=amplitude) if modes is None else smooth_stream(grid, modes, amplitude)
    u, v = stream_velocity(psi, grid)
    return Field.vector(grid, u, v)


def random_divergence_free(grid, rng, amplitude=1.0):
    psi = np.zeros(grid.shape("node"))
    psi[1:-1, 1:-1] = rng.standard_normal((grid.nx - 1, grid.ny - 1))
    u, v = stream_velocity(amplitude * psi, grid)
    return Field.vector(grid, u, v)


def strip_source(grid, time_profile=None):
    """Mean-zero divergence source vanishing on the closed physical domain"""
    x, y = grid.coordinates("cell")
    width = grid.lx - grid.x_gamma
    envelope = np.where(x > grid.x_gamma, np.sin(np.pi * (x - grid.x_gamma) / width) ** 2, 0.0)
    shape = envelope * np.cos(2.0 * np.pi * y / grid.ly)
    if time_profile is None:
        return lambda t: shape
    return lambda t: time_profile(t) * shape
