import numpy as np
import pytest

from zgrsim.data import gaussian_mixture, make_bundle
from zgrsim.federation import FederationConfig, SystemModel
from zgrsim.model import Batch, init_model


def small_bundle(N=4, features=6, classes=3, n=240, seed=0):
    X, y, means = gaussian_mixture(n, features, classes, separation=3.0, seed=seed)
    Xe, ye, _ = gaussian_mixture(80, features, classes, separation=3.0, seed=seed + 1, means=means)
    return make_bundle(X, y, Xe, ye, N, concentration=0.5, seed=seed, public_fraction=0.2)


@pytest.fixture
def bundle():
    return small_bundle()


@pytest.fixture
def tiny_params():
    return init_model((6, 3), seed=0)


@pytest.fixture
def mlp_params():
    return init_model((6, 5, 3), seed=1)


@pytest.fixture
def batch():
    rng = np.random.default_rng(3)
    return Batch(rng.standard_normal((12, 6)), rng.integers(0, 3, 12))


@pytest.fixture
def fed_config():
    return FederationConfig(N=4, eta=0.05, gamma=2, rounds_total=6, client_batch=0, m_max=4)


@pytest.fixture
def system():
    return SystemModel()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
