import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def central_diff(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def mc_se(x):
    x = np.asarray(x, dtype=float)
    return x.std(ddof=1) / np.sqrt(len(x))
