import numpy as np
import pytest

from pfgp.kernels import KernelParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def params_2d():
    return KernelParams(np.array([0.8, 1.2]), 1.3, 0.3)


@pytest.fixture
def params_1d():
    return KernelParams(np.array([0.8]), 1.0, 0.25)


def random_instance(rng, n, d, params, spread=2.5):
    """Random regression instance with well-separated inputs."""
    X = rng.uniform(-spread, spread, size=(n, d))
    y = rng.standard_normal(n)
    return X, y


def random_psd(rng, n, scale=1.0):
    W = rng.standard_normal((n, n))
    return scale * (W @ W.T) / n + 0.1 * scale * np.eye(n)
