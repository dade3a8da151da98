import pytest

from dapsi.exceptions import ProtocolViolation
from dapsi.services.psi_backend import (
    DhBackend,
    OracleBackend,
    _bob_matches,
    _encode_indices,
    blind,
    get_backend,
    hash_to_point,
    psi_dh,
    psi_plain_oracle,
    random_scalar,
    run_psi,
)


def _elements(rng, n):
    return [rng.bytes(8) for _ in range(n)]


def test_plain_oracle():
    assert psi_plain_oracle([b'a', b'b', b'c'], [b'c', b'd', b'a']) == {b'a', b'c'}
    assert psi_plain_oracle([], [b'x']) == set()


@pytest.mark.parametrize('backend', [OracleBackend(), DhBackend()])
def test_backend_equals_oracle(backend, rng):
    for _ in range(3):
        alice = _elements(rng, 120)
        bob = alice[:40] + _elements(rng, 60)
        run = run_psi(alice, bob, backend, seed=int(rng.integers(0, 1000)))
        assert run.intersection == psi_plain_oracle(alice, bob)


def test_dh_larger_sets(rng):
    alice = _elements(rng, 500)
    bob = alice[100:300] + _elements(rng, 300)
    assert psi_dh(alice, bob, seed=2).intersection == set(alice[100:300])


def test_blinding_commutes(rng):
    a, b = random_scalar(rng), random_scalar(rng)
    point = hash_to_point(b'element')
    assert blind(a, blind(b, point)) == blind(b, blind(a, point))
    assert hash_to_point(b'element') == point
    assert len(point) == 32 and point[31] < 0x80


def test_dh_bytes_grow_linearly(rng):
    small = psi_dh(_elements(rng, 100), _elements(rng, 100), seed=1)
    large = psi_dh(_elements(rng, 200), _elements(rng, 200), seed=1)
    ratio = large.transcripts['alice'].total_bytes / small.transcripts['alice'].total_bytes
    assert 1.8 <= ratio <= 2.2


def test_dh_is_deterministic(rng):
    alice, bob = _elements(rng, 30), _elements(rng, 30)
    first, second = psi_dh(alice, bob, seed=7), psi_dh(alice, bob, seed=7)
    assert sorted(first.transcripts['bob'].rows()) == sorted(second.transcripts['bob'].rows())


def test_unknown_backend():
    assert get_backend('dh').name == 'dh'
    with pytest.raises(ValueError):
        get_backend('ot')


def test_result_index_out_of_range():
    with pytest.raises(ProtocolViolation):
        _bob_matches([b'x', b'y'], _encode_indices([2]))
