import gmpy2
import numpy as np
import pytest
from scipy.stats import chisquare

from dapsi.exceptions import ChunkOverflow, DecryptOutOfRange
from dapsi.services.crypto import (
    DlogTable,
    KeyChunks,
    PrfKey,
    ahe_add,
    ahe_decrypt,
    ahe_encrypt,
    ahe_rerandomize,
    ahe_scale,
    ahe_trivial,
    chunk_count,
    chunks_to_key,
    decode_ciphertexts,
    decode_public_key,
    derive_public_key,
    encode_ciphertexts,
    encode_public_key,
    get_group,
    group_names,
    key_to_chunks,
    masked_prf_set,
    prf_field,
    random_prf_key,
    reserved_abscissas,
    slotted_prf_set,
)


@pytest.mark.parametrize('name', ['modp768', 'modp1024', 'modp1536', 'modp2048'])
def test_groups_are_safe_primes(name):
    group = get_group(name)
    assert gmpy2.is_prime(group.p)
    assert gmpy2.is_prime(group.q)
    assert pow(group.g, group.q, group.p) == 1


def test_unknown_group():
    with pytest.raises(ValueError):
        get_group('modp512')
    assert 'modp768' in group_names()


def test_scale_then_decrypt(keypair768, rng):
    c = ahe_encrypt(keypair768.pk, 5, rng)
    assert ahe_decrypt(keypair768, ahe_scale(c, 3)) == 15


def test_additive_homomorphism(keypair768, rng):
    pk = keypair768.pk
    total = ahe_add(ahe_encrypt(pk, 1000, rng), ahe_encrypt(pk, 234, rng))
    assert ahe_decrypt(keypair768, total) == 1234
    assert ahe_decrypt(keypair768, ahe_add(total, ahe_trivial(pk.group, -34))) == 1200
    assert ahe_decrypt(keypair768, ahe_rerandomize(pk, total, rng)) == 1234


@pytest.mark.slow
def test_homomorphism_on_random_triples(keypair768, rng):
    """Dec(s * (Enc(m1) + Enc(m2))) = s * (m1 + m2) below 2^24."""
    pk = keypair768.pk
    for _ in range(1000):
        m1, m2 = (int(x) for x in rng.integers(0, 1 << 12, size=2))
        s = int(rng.integers(0, 1 << 11))
        c = ahe_scale(ahe_add(ahe_encrypt(pk, m1, rng), ahe_encrypt(pk, m2, rng)), s)
        assert ahe_decrypt(keypair768, c) == s * (m1 + m2)


def test_largest_plaintext_round_trip(keypair768, rng):
    top = (1 << 24) - 1
    assert ahe_decrypt(keypair768, ahe_encrypt(keypair768.pk, top, rng)) == top
    assert ahe_decrypt(keypair768, ahe_add(ahe_encrypt(keypair768.pk, top - 5, rng),
                                           ahe_trivial(keypair768.pk.group, 5))) == top


def test_rerandomize_changes_ciphertext(keypair768, rng):
    c = ahe_encrypt(keypair768.pk, 9, rng)
    assert ahe_rerandomize(keypair768.pk, c, rng) != c


def test_decrypt_outside_table(keypair768, rng):
    c = ahe_encrypt(keypair768.pk, 1 << 24, rng)
    with pytest.raises(DecryptOutOfRange):
        ahe_decrypt(keypair768, c)


def test_dlog_table_edges():
    group = get_group('modp768')
    table = DlogTable(group, 12)
    assert table.table_bits == 8
    for m in (0, 1, 255, 256, 4095):
        assert table.lookup(pow(group.g, m, group.p)) == m
    with pytest.raises(DecryptOutOfRange):
        table.lookup(pow(group.g, 4096, group.p))


def test_ciphertext_and_key_codecs(keypair1024, rng):
    pk = keypair1024.pk
    cts = [ahe_encrypt(pk, m, rng) for m in (0, 7, 99)]
    decoded, offset = decode_ciphertexts(encode_ciphertexts(cts, pk.group), pk.group)
    assert decoded == cts
    assert offset == 4 + 3 * 2 * pk.group.byte_len
    assert decode_public_key(encode_public_key(pk)) == pk


def test_prf_deterministic(big_field):
    key = PrfKey(12345)
    assert prf_field(key, 1, big_field) == prf_field(key, 1, big_field)
    assert prf_field(key, 1, big_field) != prf_field(key, 2, big_field)
    assert prf_field(key, 1, big_field) != prf_field(PrfKey(12346), 1, big_field)
    assert 0 <= prf_field(key, b'abc', big_field) < big_field.p
    with pytest.raises(ValueError):
        prf_field(key, -1, big_field)


def test_prf_small_field_range(f101):
    values = {prf_field(PrfKey(3), i, f101) for i in range(2000)}
    assert values <= set(range(101))
    assert len(values) > 90


def test_prf_is_uniform_on_small_field(f101):
    counts = np.bincount([prf_field(PrfKey(77), i, f101) for i in range(101 * 100)], minlength=101)
    assert chisquare(counts).pvalue > 1e-4


def test_derived_key_is_shared(big_field):
    assert derive_public_key(b'seed', big_field) == derive_public_key(b'seed', big_field)
    assert derive_public_key(b'seed', big_field) != derive_public_key(b'seeds', big_field)


def test_chunk_order(big_field):
    """kappa = 2^24 splits as (0, 1, 0, ...), lowest chunk first."""
    chunks = key_to_chunks(PrfKey(1 << 24), big_field)
    assert chunks.chunks == (0, 1, 0, 0, 0, 0)
    assert chunk_count(big_field) == 6


def test_chunk_round_trip(big_field, rng):
    for _ in range(1000):
        key = random_prf_key(big_field, rng)
        assert chunks_to_key(key_to_chunks(key, big_field), big_field) == key


def test_chunk_overflow(big_field):
    with pytest.raises(ChunkOverflow):
        chunks_to_key(KeyChunks((1 << 24, 0, 0, 0, 0, 0)), big_field)
    with pytest.raises(ChunkOverflow):
        chunks_to_key(KeyChunks(((1 << 24) - 1,) * 6), big_field)


def test_masked_prf_single_bit_masks(big_field, rng):
    """Single-bit masks: the sets differ in exactly as many places as the vectors."""
    length = 16
    masks = [np.eye(length, dtype=np.uint8)[i] for i in range(length)]
    key = random_prf_key(big_field, rng)
    a = rng.integers(0, 2, size=length, dtype=np.uint8)
    for k in range(length + 1):
        b = a.copy()
        b[rng.choice(length, size=k, replace=False)] ^= 1
        sa = masked_prf_set(key, masks, a, big_field)
        sb = masked_prf_set(key, masks, b, big_field)
        assert sum(x != y for x, y in zip(sa, sb)) == k


def test_slotted_set_is_distinct_and_avoids_reserved(f101):
    reserved = reserved_abscissas(4, 9)
    assert reserved == range(10, 19)
    messages = [b'a', b'b', b'c', b'd']
    for k in range(300):
        elems = slotted_prf_set(PrfKey(k), messages, reserved, f101)
        assert len(set(elems)) == 4
        assert all(0 <= e < 101 and e not in reserved for e in elems)
    key = PrfKey(5)
    again = slotted_prf_set(key, [b'a', b'x', b'c', b'y'], reserved, f101)
    first = slotted_prf_set(key, messages, reserved, f101)
    assert (again[0], again[2]) == (first[0], first[2])
    with pytest.raises(ValueError):
        slotted_prf_set(key, [bytes([i]) for i in range(93)], reserved, f101)


def test_masked_set_on_small_field(f101, rng):
    """The T samples never collide and never hit an abscissa at 2T+2 .. 4T+2."""
    masks = [rng.integers(0, 2, size=8, dtype=np.uint8) for _ in range(4)]
    for _ in range(300):
        key = random_prf_key(f101, rng)
        elems = masked_prf_set(key, masks, rng.integers(0, 2, size=8, dtype=np.uint8), f101)
        assert len(set(elems)) == 4
        assert not set(elems) & set(range(10, 19))
