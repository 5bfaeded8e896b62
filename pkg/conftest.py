"""Shared fixtures and the --runslow switch for end-to-end experiment tests."""

import numpy as np
import pytest

from signal_model import Dimensions, Variant, draw_scenario, synth_measurement


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full solver runs on experiment-sized problems")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_dims():
    return Dimensions(M=5, P=3, J=2, L=1, Q=1)


@pytest.fixture
def small_scenario(small_dims):
    return draw_scenario(small_dims, Variant.baseline(), seed=11, layout="dense",
                         radar_channels=[{"delays": [0.3], "dopplers": [0.6]}],
                         comms_channels=[{"delays": [0.75], "dopplers": [0.15]}])


@pytest.fixture
def small_measurement(small_scenario):
    return synth_measurement(small_scenario)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
