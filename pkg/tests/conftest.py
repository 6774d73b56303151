# tests/conftest.py
import shutil
import tempfile

import numpy as np
import pytest
import structlog

from fga_sh.config import parse_config
from fga_sh.initial_data import GaussianWavePacket
from fga_sh.potentials import SimpleCrossing

SMALL_CONFIG = """
[potential]
model = simple

[packet]
center = -1.0
momentum = 2.0
alpha = 12.5

[run]
eps = 0.04
delta = 0.04
final_time = 0.2
trajectories = 200
seed = 11
chunk_size = 100
table_resolution = 48

[grid]
lower = -4.0
upper = 4.0
n = 512

[output]
name = small
"""


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def reset_logging():
    """Drop any logging config a CLI test installed (it may point at a closed capture stream)."""
    yield
    structlog.reset_defaults()


@pytest.fixture
def temp_dir():
    """Create a temporary directory for testing."""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    # Clean up
    shutil.rmtree(temp_dir)


@pytest.fixture
def simple_potential():
    return SimpleCrossing()


@pytest.fixture
def packet():
    """Example 1 packet: alpha = 1/(2 eps) at eps = 0.04."""
    return GaussianWavePacket(center=np.array([-1.5]), alpha=12.5, momentum=np.array([2.0]))


@pytest.fixture
def small_config_text():
    return SMALL_CONFIG


@pytest.fixture
def small_config(temp_dir):
    """Cheap simple-crossing run writing into temp_dir."""
    config = parse_config(SMALL_CONFIG)
    return config.with_updates(output={"directory": temp_dir})


@pytest.fixture
def small_config_file(temp_dir):
    path = f"{temp_dir}/small.cfg"
    with open(path, "w") as f:
        f.write(SMALL_CONFIG.replace("name = small", f"name = small\ndirectory = {temp_dir}"))
    return path
