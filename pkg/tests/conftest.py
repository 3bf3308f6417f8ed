import numpy as np
import pytest

from fdca.array_model import build_coprime_layout


@pytest.fixture(scope='session')
def layout():
    return build_coprime_layout(3, 5)


def random_hermitian(rng, n, scale=1.0):
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (G + G.conj().T)


def random_generator(rng, n):
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    z[0] = z[0].real
    return z
