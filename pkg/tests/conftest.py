import os
import sys

import numpy as np
import pytest

# Ensure project root (and this directory, for the oracles) is on sys.path so `import gpatt` works
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
for path in (ROOT, os.path.dirname(os.path.abspath(__file__))):
    if path not in sys.path:
        sys.path.insert(0, path)

from oracles import holed, random_grid  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run desk-scale acceptance runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid(rng):
    return random_grid(rng, (5, 4))


@pytest.fixture
def holed_obs(rng, small_grid):
    return holed(rng, small_grid)
