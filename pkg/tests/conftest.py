import numpy as np
import pytest

from beamrate import ChannelTensor


def crandn(rng, *shape):
    """Circularly-symmetric complex Gaussian with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def flat_tensor(H, L=1):
    """Tensor whose every subcarrier is the matrix ``H``."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    return ChannelTensor(np.broadcast_to(H, (L,) + H.shape).copy())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
