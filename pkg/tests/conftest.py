import numpy as np
import pytest


def random_spd(rng, dim, scale=1.0):
    """SPD matrix with log-eigenvalues of order ``scale``."""
    A = rng.standard_normal((dim, dim))
    Q, _ = np.linalg.qr(A)
    lam = np.exp(scale * rng.standard_normal(dim))
    return (Q * lam) @ Q.T


def random_sym(rng, dim, scale=1.0):
    A = scale * rng.standard_normal((dim, dim))
    return (A + A.T) / 2.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
