"""
Shared fixtures for the simulator test suite.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "simulator"))

from chain_mapping import ChainCoefficients, recurrence_coefficients  # noqa: E402
from models import BathSpec, ModelSpec  # noqa: E402
from spectral_density import thermalize, wscp_background_density, wscp_density  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def wscp():
    return wscp_density()


@pytest.fixture(scope="session")
def wscp_background():
    return wscp_background_density()


@pytest.fixture(scope="session")
def chain_300k(wscp):
    """60 T-TEDOPA coefficients of J_W at 300 K"""
    return recurrence_coefficients(thermalize(wscp, 300.0), 60)


@pytest.fixture(scope="session")
def chain_0k(wscp):
    return recurrence_coefficients(thermalize(wscp, 0.0), 60)


@pytest.fixture
def dephasing_model(wscp):
    def build(temperature=300.0, **kwargs):
        return ModelSpec(kind="dephasing", baths=(BathSpec(wscp, temperature),), **kwargs)
    return build


@pytest.fixture
def dimer_model(wscp):
    def build(temperature=300.0, **kwargs):
        return ModelSpec(kind="dimer", baths=(BathSpec(wscp, temperature), BathSpec(wscp, temperature)), **kwargs)
    return build


@pytest.fixture
def toy_chain():
    """Short hand-written chain, large enough to entangle within a few steps"""
    omegas = np.array([120.0, 150.0, 170.0, 175.0])
    kappas = np.array([40.0, 60.0, 80.0, 85.0])
    return ChainCoefficients(omegas, kappas, {"support": [0.0, 350.0]})
