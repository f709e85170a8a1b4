"""
Shared pytest setup: repository root on sys.path and the `slow` marker.

Acceptance-scale runs (thousands of replications, the m = 10,000 benchmark)
are marked slow and only run with --runslow.
"""
import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run acceptance-scale tests marked slow")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale Monte Carlo run")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
