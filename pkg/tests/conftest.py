import numpy as np
import pytest

from cransparse import NetworkConfig, build_layout, draw_channel

ACCEPTANCE_LINES = []


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def full_config():
    return NetworkConfig(n_cells=16, n_antennas_per_cell=8, n_users_per_cell=4, rng_seed=3)


@pytest.fixture(scope="session")
def full_layout(full_config):
    return build_layout(full_config)


@pytest.fixture(scope="session")
def full_channel(full_layout):
    return draw_channel(full_layout, 3)


@pytest.fixture
def small_layout():
    return build_layout(NetworkConfig(n_cells=4, n_antennas_per_cell=3, n_users_per_cell=2,
                                      rng_seed=1))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dominant_instance(rng, n_antennas=8, n_users=4, strength=2.0, spread=0.3):
    """Dense channel whose user k dominates antennas 2k and 2k+1, plus an observation."""
    H = spread * crandn(rng, n_antennas, n_users)
    per_user = n_antennas // n_users
    for k in range(n_users):
        H[per_user * k:per_user * (k + 1), k] += strength
    x = crandn(rng, n_users)
    y = H @ x + crandn(rng, n_antennas)
    return H, y
