"""
Shared fixtures: small prime fields, seeded generators and AHE keypairs on
the short MODP groups.
"""

import socket

import numpy as np
import pytest

from dapsi.services.crypto import ahe_keygen, get_group
from dapsi.utils.field import get_field


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def f5():
    return get_field(5)


@pytest.fixture
def f7():
    return get_field(7)


@pytest.fixture
def f101():
    return get_field(101)


@pytest.fixture
def big_field():
    return get_field(2**127 - 1)


@pytest.fixture(scope='session')
def keypair768():
    return ahe_keygen(24, get_group('modp768'), np.random.default_rng(768))


@pytest.fixture(scope='session')
def keypair1024():
    return ahe_keygen(24, get_group('modp1024'), np.random.default_rng(1024))


@pytest.fixture
def free_port():
    """Callable returning a loopback port that was free a moment ago."""
    def pick() -> int:
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
            s.bind(('127.0.0.1', 0))
            return s.getsockname()[1]
    return pick
