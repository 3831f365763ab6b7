import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import lie  # noqa: E402
import sde  # noqa: E402


@pytest.fixture
def milnor():
    return lie.milnor_basis()


@pytest.fixture(params=[2, 3, 4])
def so_n(request):
    return request.param, lie.so_basis(request.param)


@pytest.fixture
def rng():
    return sde.NoiseStream(1234, 0).generator()


@pytest.fixture
def heisenberg_text():
    return '\n'.join([
        'model = heisenberg',
        'epsilon = 1, 0.5',
        'T = 0.2',
        'seed = 5',
        'paths = 40',
        'times = 0.1, 0.2',
        'calculus = ito',
        'chunk = 16',
    ]) + '\n'


@pytest.fixture
def rotinv_text():
    return '\n'.join([
        'model = rotinv',
        'epsilon = 1, 0.5',
        'T = 0.2',
        'seed = 9',
        'paths = 40',
        'times = 0.05, 0.1, 0.15, 0.2',
        'n = 2',
        'chunk = 16',
    ]) + '\n'


def assert_close(a, b, atol):
    np.testing.assert_allclose(np.asarray(a), np.asarray(b), rtol=0, atol=atol)
