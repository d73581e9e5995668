import numpy as np
import pytest

from mertoncfd import GridSpec, MarketParams, SolverConfig


@pytest.fixture(scope="session")
def merton_params():
    """Standard Merton put test set used throughout the suite."""
    return MarketParams(
        r=0.05, sigma=0.15, lam=0.10, mu_j=-0.90, sigma_j=0.45,
        K=100.0, S0=100.0, T=0.25,
    )


@pytest.fixture(scope="session")
def local_vol_params(merton_params):
    import dataclasses

    return dataclasses.replace(merton_params, vol_mode="local")


@pytest.fixture
def small_grid(merton_params):
    return GridSpec.from_mesh_ratio(L=2.0, N=64, T=merton_params.T, ratio=0.4)


@pytest.fixture
def medium_grid(merton_params):
    return GridSpec.from_mesh_ratio(L=2.0, N=256, T=merton_params.T, ratio=0.4)


@pytest.fixture
def config():
    return SolverConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
