import struct
from itertools import product
from math import comb

import numpy as np
import pytest
from pydantic import ValidationError

from dapsi.exceptions import ComputeCapExceeded, ProtocolViolation, VerifyFailed
from dapsi.models.params import HamParams, SubSampleParams, sample_masks
from dapsi.services.crypto import PrfKey, ahe_decrypt, random_prf_key
from dapsi.services.hamming import (
    ROLES,
    HammingBob,
    bin_collision_trial,
    bin_index,
    build_keyset,
    decode_keysets,
    encode_keysets,
    encode_partition,
    encrypt_parity,
    encrypted_distance,
    ham_contain_query,
    ham_psi,
    ham_psi_sample,
    ham_query_restricted,
    occupied_bins_trial,
    permute_and_partition,
    subsample,
    t_ham_query,
)
from dapsi.utils.bits import flip_random, hamming_distance, hamming_weight, pack_bits, random_bits
from dapsi.utils.randomness import spawn_rngs
from dapsi.utils.transport import Tag, pipe_pair


def _params(vector_len=64, threshold=2, fpr=0.25, group='modp768'):
    return HamParams(vector_len=vector_len, threshold=threshold, fpr=fpr, ahe_group=group)


def test_bin_count():
    assert _params(32).n_bins == 32
    assert _params(256, 8, 0.1).n_bins == 1280


def test_threshold_must_stay_below_half():
    with pytest.raises(ValidationError):
        _params(8, 4)
    with pytest.raises(ValidationError):
        HamParams(vector_len=64, threshold=2, fpr=0.25, ahe_group='modp100')


def test_partition_is_deterministic(rng):
    params = _params()
    v = random_bits(64, rng)
    seed = rng.bytes(16)
    first = permute_and_partition(v, seed, params)
    assert first == permute_and_partition(v, seed, params)
    assert first.n_bins == 32
    assert ''.join(first.sub_vectors).count('1') == int(v.sum())
    with pytest.raises(ValueError):
        permute_and_partition(v[:10], seed, params)


def test_single_flip_changes_one_parity(rng):
    params = _params()
    for _ in range(50):
        a = random_bits(64, rng)
        b = flip_random(a, 1, rng)
        seed = rng.bytes(16)
        pa, pb = permute_and_partition(a, seed, params), permute_and_partition(b, seed, params)
        assert sum(x != y for x, y in zip(pa.parity_vec, pb.parity_vec)) == 1


def test_parity_distance_equals_hd_without_collisions(rng):
    params = _params(128, 3, 0.25)
    checked = 0
    for _ in range(200):
        a = random_bits(128, rng)
        b = flip_random(a, int(rng.integers(0, 7)), rng)
        seed = rng.bytes(16)
        pa, pb = permute_and_partition(a, seed, params), permute_and_partition(b, seed, params)
        per_bin = [sum(x != y for x, y in zip(sa, sb)) for sa, sb in zip(pa.sub_vectors, pb.sub_vectors)]
        if max(per_bin) <= 1:
            checked += 1
            assert sum(x != y for x, y in zip(pa.parity_vec, pb.parity_vec)) == hamming_distance(a, b)
    assert checked > 100


def test_bin_index_matches_array_split():
    for length, n_bins in ((100, 32), (64, 32), (10, 20), (257, 8)):
        blocks = np.array_split(np.arange(length), n_bins)
        expected = np.concatenate([np.full(len(b), i) for i, b in enumerate(blocks)])
        assert np.array_equal(bin_index(np.arange(length), length, n_bins), expected)


def test_bin_collisions_within_bound(rng):
    """2d differences over N = 2d^2/fpr bins share a bin in at most fpr + 3 sigma of trials."""
    params = _params(4096, 10, 0.1)
    trials = 2000
    collided = sum(bin_collision_trial(params, 20, rng).parity_distance < 20 for _ in range(trials))
    sigma = np.sqrt(0.1 * 0.9 / trials)
    assert collided / trials <= 0.1 + 3 * sigma


@pytest.mark.slow
@pytest.mark.parametrize('fpr', [0.05, 0.1])
def test_bin_collision_rate(rng, fpr):
    d, trials = 10, 10_000
    params = _params(4096, d, fpr)
    collided = sum(bin_collision_trial(params, 2 * d, rng).parity_distance < 2 * d for _ in range(trials))
    assert collided / trials <= fpr + 3 * np.sqrt(fpr * (1 - fpr) / trials)


@pytest.mark.slow
@pytest.mark.parametrize('fpr', [0.05, 0.1])
def test_occupied_bins_rate(rng, fpr):
    """2d + 1 differences fill fewer than 2d bins in at most fpr + 3 sigma of trials."""
    d, trials = 10, 10_000
    params = _params(4096, d, fpr)
    short = sum(occupied_bins_trial(params, 2 * d + 1, rng) < 2 * d for _ in range(trials))
    assert short / trials <= fpr + 3 * np.sqrt(fpr * (1 - fpr) / trials)
    assert occupied_bins_trial(params, 1, rng) == 1


def test_partition_encoding_sizes(big_field, rng):
    params = _params()
    part = permute_and_partition(random_bits(64, rng), rng.bytes(16), params)
    assert encode_partition(part, big_field).size == params.n_bins


def test_partition_encoding_on_small_field(f101, rng):
    """Bin elements stay distinct and below the 2N + 2 abscissas even at p = 101."""
    params = _params()
    for _ in range(50):
        part = permute_and_partition(random_bits(64, rng), rng.bytes(16), params)
        elems = encode_partition(part, f101).elems
        assert len(elems) == params.n_bins
        assert max(elems) < 2 * params.n_bins + 2


def test_hamming_identity(rng):
    a = rng.integers(0, 2, size=(10_000, 64), dtype=np.uint8)
    b = rng.integers(0, 2, size=(10_000, 64), dtype=np.uint8)
    for x, y in zip(a, b):
        dot = int(x.astype(np.int64) @ y.astype(np.int64))
        assert hamming_distance(x, y) == hamming_weight(x) + hamming_weight(y) - 2 * dot


def test_encrypted_distance(keypair768, rng):
    pk = keypair768.pk
    for _ in range(100):
        x = random_bits(20, rng)
        y = random_bits(20, rng)
        enc = encrypted_distance(pk, encrypt_parity(pk, x, rng), y)
        assert ahe_decrypt(keypair768, enc) == hamming_distance(x, y)
    with pytest.raises(ProtocolViolation):
        encrypted_distance(pk, encrypt_parity(pk, x, rng), y[:5])


def test_keyset_opens_only_within_threshold(keypair768, rng, big_field):
    """With one bit per bin the parity distance is the Hamming distance."""
    params = _params(32, 2, 0.25)
    assert params.n_bins == 32
    for distance in range(0, 2 * params.threshold + 1):
        a = random_bits(32, rng)
        b = flip_random(a, distance, rng)
        key = random_prf_key(big_field, rng)
        query = ham_query_restricted(a, b, key, params, rng, keypair768)
        if distance <= params.threshold:
            assert query.recovered_key == key
            assert query.opened[distance] == key
            assert sum(k is not None for k in query.opened) == 1
        else:
            assert query.recovered_key is None


def test_keyset_codec(keypair768, rng, big_field):
    pk = keypair768.pk
    enc_hd = encrypted_distance(pk, encrypt_parity(pk, [1, 0, 1], rng), [1, 1, 1])
    keysets = [build_keyset(pk, enc_hd, random_prf_key(big_field, rng), 2, rng, big_field) for _ in range(2)]
    decoded = decode_keysets(encode_keysets(keysets, pk), pk)
    assert decoded == keysets
    assert decoded[0].threshold == 2
    assert decoded[0].chunk_count == 6


def _planted(rng, n_alice=3, n_bob=4, length=64, d=2):
    alice = [random_bits(length, rng) for _ in range(n_alice)]
    bob = [random_bits(length, rng) for _ in range(n_bob)]
    bob[1] = flip_random(alice[0], d, rng)
    bob[3] = flip_random(alice[2], 1, rng)
    return alice, bob, {(0, 1), (2, 3)}


def test_ham_psi_finds_planted_pairs(rng):
    params = _params()
    alice, bob, planted = _planted(rng)
    result = ham_psi(alice, bob, params, seed=5)
    assert set(result.matches) == planted
    for (i, j), (a, b) in zip(result.matches, result.pairs):
        assert np.array_equal(a, alice[i])
        assert np.array_equal(b, bob[j])
    assert result.rejected == []
    phases = {row[0] for row in result.transcripts['alice'].rows()}
    assert {'setup', 'restricted', 'recon', 'recover'} <= phases


def test_ham_psi_without_release(rng):
    params = _params()
    alice, bob, planted = _planted(rng)
    result = ham_psi(alice, bob, params, seed=5, release=False)
    assert {(m.alice_index, m.bob_index) for m in result.hits} == planted
    assert result.pairs == []
    assert result.transcripts['alice'].frames_for('recover') == 0


def test_ham_psi_is_deterministic(rng):
    params = _params()
    alice, bob, _ = _planted(rng)
    first = ham_psi(alice, bob, params, seed=11)
    second = ham_psi(alice, bob, params, seed=11)
    assert first.matches == second.matches
    for role in ROLES:
        assert sorted(first.transcripts[role].rows()) == sorted(second.transcripts[role].rows())


def test_single_query(rng):
    params = _params()
    a = random_bits(64, rng)
    b = flip_random(a, 2, rng)
    pair = t_ham_query(a, b, params, seed=1)
    assert pair is not None and np.array_equal(pair[1], b)
    assert t_ham_query(a, random_bits(64, rng), params, seed=1) is None


def test_containment_query(rng):
    params = _params()
    a = random_bits(64, rng)
    bob = [random_bits(64, rng), random_bits(64, rng), flip_random(a, 1, rng)]
    found = ham_contain_query(a, bob, params, seed=3)
    assert found is not None
    assert found[0] == 2
    assert isinstance(found[1], PrfKey)
    assert ham_contain_query(a, bob[:2], params, seed=3) is None


def _release_request(bob, j, key, a):
    alice_end, bob_end = pipe_pair()
    payload = struct.pack('<I', j) + key.to_bytes() + pack_bits([a])
    return bob._release(payload, bob_end), alice_end.recv()[0]


def test_recover_checks_key_and_distance(rng, big_field):
    params = _params()
    b = random_bits(64, rng)
    bob = HammingBob([b], params, rng)
    key = random_prf_key(big_field, rng)
    bob._keys = [key]
    assert _release_request(bob, 0, key, flip_random(b, 2, rng)) == (0, Tag.RELEASE)
    assert _release_request(bob, 0, key, flip_random(b, 3, rng)) == (None, Tag.REJECT)
    assert _release_request(bob, 0, PrfKey(key.value ^ 1), b) == (None, Tag.REJECT)
    assert _release_request(bob, 5, key, b) == (None, Tag.REJECT)


def test_subsample_agreement_counts(big_field, rng):
    length = 12
    masks = tuple(np.eye(length, dtype=np.uint8)[i] for i in range(length))
    params = SubSampleParams(length, 1, masks, random_prf_key(big_field, rng))
    a = random_bits(length, rng)
    b = flip_random(a, 5, rng)
    sa, sb = subsample(a, params, big_field), subsample(b, params, big_field)
    assert sum(x != y for x, y in zip(sa, sb)) == 5


def _sample_oracle(alice, bob, T, t, weight, seed):
    """Plaintext t-of-T agreement, replaying Bob's mask draw."""
    masks = sample_masks(len(bob[0]), T, weight, spawn_rngs(seed, ROLES)['bob'])
    out = set()
    for i, a in enumerate(alice):
        for j, b in enumerate(bob):
            agree = sum(np.array_equal(a & m, b & m) for m in masks)
            if agree >= t:
                out.add((i, j))
    return out


def test_ham_psi_sample_matches_oracle(big_field, rng):
    T, t, weight = 6, 2, 4
    alice = [random_bits(32, rng) for _ in range(2)]
    bob = [flip_random(alice[0], 1, rng), random_bits(32, rng), alice[1].copy()]
    result = ham_psi_sample(alice, bob, T, t, weight, big_field, seed=9)
    assert set(result.matches) == _sample_oracle(alice, bob, T, t, weight, seed=9)
    assert {(0, 0), (1, 2)} <= set(result.matches)
    assert result.transcripts['dealer'].bytes_for('subsample') > 0


def test_ham_psi_sample_random_pairs(big_field, rng):
    T, t, weight = 8, 2, 3
    alice = [random_bits(24, rng) for _ in range(4)]
    bob = [flip_random(alice[k % 4], int(rng.integers(0, 8)), rng) for k in range(5)]
    result = ham_psi_sample(alice, bob, T, t, weight, big_field, seed=21)
    assert set(result.matches) == _sample_oracle(alice, bob, T, t, weight, seed=21)


def test_ham_psi_sample_compute_cap(big_field, rng):
    vectors = [random_bits(16, rng)]
    with pytest.raises(ComputeCapExceeded):
        ham_psi_sample(vectors, vectors, 8, 4, 3, big_field, compute_cap=10)


@pytest.mark.slow
def test_ham_psi_acceptance_scale(rng):
    """l=256, d=8, fpr=0.1: every planted pair within d is found."""
    params = HamParams(vector_len=256, threshold=8, fpr=0.1, ahe_group='modp1024')
    n = 4
    alice = [random_bits(256, rng) for _ in range(n)]
    bob = [flip_random(a, int(rng.integers(0, 9)), rng) for a in alice]
    result = ham_psi(alice, bob, params, seed=2024)
    assert {(i, i) for i in range(n)} <= set(result.matches)
    for i, j in result.matches:
        assert hamming_distance(alice[i], bob[j]) <= params.threshold



@pytest.mark.parametrize('n,d,fpr,group', [
    (2, 2, 0.25, 'modp768'),
    pytest.param(4, 8, 0.1, 'modp1024', marks=pytest.mark.slow),
])
def test_traffic_does_not_depend_on_vector_length(rng, n, d, fpr, group):
    counts = []
    for length in (256, 4096):
        params = HamParams(vector_len=length, threshold=d, fpr=fpr, ahe_group=group)
        alice = [random_bits(length, rng) for _ in range(n)]
        bob = [flip_random(a, 1, rng) for a in alice]
        log = ham_psi(alice, bob, params, seed=11, release=False).transcripts['alice']
        counts.append([log.bytes_for(phase, direction)
                       for phase in ('restricted', 'recon') for direction in ('sent', 'recv')])
    assert counts[0] == counts[1]
    assert all(counts[0])


@pytest.mark.slow
def test_far_pairs_are_not_released(rng):
    """HD = 2d + 2: Alice's checks pass in at most fpr + 3 sigma of queries, Bob never releases."""
    params = _params(64, 2, 0.25)
    trials = 100
    refused = 0
    for s in range(trials):
        a = random_bits(64, rng)
        b = flip_random(a, 2 * params.threshold + 2, rng)
        try:
            assert t_ham_query(a, b, params, seed=s) is None
        except VerifyFailed:
            refused += 1
    assert refused / trials <= params.fpr + 3 * np.sqrt(params.fpr * (1 - params.fpr) / trials)


@pytest.mark.slow
def test_false_positive_rate_between_d_and_2d(rng):
    """500 pairs at HD in (d, 2d]: Alice accepts at most fpr + 3 sigma of them."""
    params = _params(64, 2, 0.25)
    d, n, runs = params.threshold, 10, 50
    planted = accepted = 0
    for s in range(runs):
        alice = [random_bits(64, rng) for _ in range(n)]
        bob = [flip_random(a, d + 1 + k % d, rng) for k, a in enumerate(alice)]
        result = ham_psi(alice, bob, params, seed=s, release=False)
        hits = {(h.alice_index, h.bob_index) for h in result.hits}
        accepted += sum((i, i) in hits for i in range(n))
        planted += n
        assert all(i == j for i, j in hits)
    assert planted == 500
    assert accepted / planted <= params.fpr + 3 * np.sqrt(params.fpr * (1 - params.fpr) / planted)


def _replayed_sample_params(vector_len, T, t, weight, field, seed):
    """Bob's masks and sub-sampling key for a given session seed."""
    rng = spawn_rngs(seed, ROLES)['bob']
    masks = sample_masks(vector_len, T, weight, rng)
    return SubSampleParams(T, t, masks, random_prf_key(field, rng))


def test_ham_psi_sample_on_small_field(f101):
    """Every pair of 4-bit vectors at p = 101: no missed match, few false accepts."""
    T, t, weight = 4, 2, 2
    vectors = [np.array(bits, dtype=np.uint8) for bits in product((0, 1), repeat=4)]
    checks = false_accepts = 0
    for seed in range(4):
        params = _replayed_sample_params(4, T, t, weight, f101, seed)
        samples = [subsample(v, params, f101) for v in vectors]
        agree = {(i, j) for i, sa in enumerate(samples) for j, sb in enumerate(samples)
                 if sum(x == y for x, y in zip(sa, sb)) >= t}
        result = ham_psi_sample(vectors, vectors, T, t, weight, f101, seed=seed)
        hits = {(h.alice_index, h.bob_index) for h in result.hits}
        assert set(result.matches) == agree
        assert set(result.rejected) == hits - agree
        false_accepts += len(result.rejected)
        checks += (len(vectors) ** 2 - len(agree)) * comb(T, t)
    assert checks > 0
    assert false_accepts <= 2 * checks / f101.p
