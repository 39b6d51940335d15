import pytest

from ssnet.channel import PortGrid, correlation_matrix, factorize, generate_dataset
from ssnet.model import SSNetConfig, SSNetWeights
from ssnet.numerics import RngStream


@pytest.fixture(scope="session")
def tiny_grid():
    return PortGrid(4, 4, 0.03, 0.03, 0.0857)


@pytest.fixture(scope="session")
def tiny_cfg(tiny_grid):
    return SSNetConfig(
        grid=tiny_grid,
        m_antennas=2,
        d_model=16,
        d_dec=8,
        depth_enc=1,
        depth_dec=1,
        heads=2,
        experts=2,
        top_k=1,
        dropout=0.0,
    )


@pytest.fixture(scope="session")
def tiny_weights(tiny_cfg):
    return SSNetWeights.init(tiny_cfg, RngStream(42, "init"))


@pytest.fixture(scope="session")
def tiny_factors(tiny_grid):
    return factorize(correlation_matrix(tiny_grid, "clarke"), 1.0)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_grid):
    return generate_dataset(tiny_grid, "clarke", 2, 1.0, 400, seed=5)


def rand_tensor_data(shape, seed=0, scale=1.0):
    return scale * RngStream(seed, f"test-{shape}").normal(shape)
