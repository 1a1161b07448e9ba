import numpy as np
import pytest

from sptrade.model import ChannelState, SystemParams
from sptrade.scenario import ChannelConfig, GeometryConfig, generate_scenario


def scenario(seed, n_mu=5, n_su=5):
    return generate_scenario(GeometryConfig(n_mu=n_mu, n_su=n_su, seed=seed), ChannelConfig())


def random_instance(rng, n_mu, n_su, **overrides):
    """Default-like parameters with randomized budget, circuit power and floors."""
    sp = SystemParams.defaults(
        n_mu, n_su,
        p_max_sc=10 ** (rng.uniform(10, 33) / 10 - 3),
        p_circuit=rng.uniform(0.05, 4.0),
        r_sc_min=rng.uniform(0.0, 2.5e6),
        mu_rate_floors=rng.uniform(100e3, 1200e3, n_mu),
    )
    if overrides:
        sp = sp.replace(**overrides)
    ch = generate_scenario(GeometryConfig(n_mu=n_mu, n_su=n_su, seed=int(rng.integers(2**63))), ChannelConfig())
    return sp, ch


@pytest.fixture
def sp55():
    return SystemParams.defaults(5, 5)


@pytest.fixture
def tiny():
    """One MU, one SU with hand-picked gains."""
    sp = SystemParams.defaults(1, 1)
    ch = ChannelState(np.array([1e-9]), np.array([1e-8]), np.array([[2e-8]]))
    return sp, ch
