import numpy as np
import pytest

import gas


@pytest.fixture(scope="session")
def chain_env():
    return gas.make_env(gas.chainrun_spec(32), seed=0)


@pytest.fixture(scope="session")
def small_chain_env():
    return gas.make_env(gas.chainrun_spec(8), seed=0)


@pytest.fixture(scope="session")
def stitch_dataset(chain_env):
    """Standard ChainRun stitching corpus: 200 trajectories, T=32."""
    return gas.generate_offline_dataset(chain_env, gas.stitch_mix(), 200, seed=0)


@pytest.fixture(scope="session")
def block_dataset(chain_env):
    """Pure block policies with exact (v=1.0, v=0.5) speeds."""
    return gas.generate_offline_dataset(chain_env, gas.pure_block_mix(), 100, seed=1)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
