import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rand_matrix(rng, n, complex_field=False, scale=1.0):
    A = rng.standard_normal((n, n))
    if complex_field:
        A = A + 1j * rng.standard_normal((n, n))
    return scale * A


def rand_vector(rng, n, complex_field=False):
    x = rng.standard_normal(n)
    if complex_field:
        x = x + 1j * rng.standard_normal(n)
    return x
