"""
Hamming-distance PSI.

A query vector and each of Bob's vectors are permuted with a fresh shared
seed and cut into N bins. Parity bits of the bins go through an AHE "key
set" that hands Alice Bob's PRF key only when the parity distance is at
most d; the key then unblinds a set reconciliation over the per-bin
encodings, which reveals the differing bins, and a final Recover step
releases Bob's vector after he re-checks the distance.

The sub-sampled variant replaces bins by T masked PRF samples and accepts
a pair when at least t samples agree.
"""

import logging
import struct
from dataclasses import dataclass, field as dc_field
from math import comb
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from dapsi import config
from dapsi.exceptions import (
    ChunkOverflow,
    ComputeCapExceeded,
    DecryptOutOfRange,
    ProtocolViolation,
    VerifyFailed,
)
from dapsi.models.params import HamParams, ReconParams, SubSampleParams, sample_masks
from dapsi.services.crypto import (
    AheKeypair,
    AhePublicKey,
    Ciphertext,
    KeyChunks,
    PrfKey,
    ahe_add,
    ahe_decrypt,
    ahe_encrypt,
    ahe_keygen,
    ahe_scale,
    ahe_trivial,
    chunks_to_key,
    decode_ciphertexts,
    decode_public_key,
    derive_public_key,
    encode_ciphertexts,
    encode_public_key,
    key_to_chunks,
    masked_prf_set,
    random_prf_key,
    reserved_abscissas,
    slotted_prf_set,
)
from dapsi.services.ole import (
    request_ole,
    request_subsample,
    request_vole,
    run_dealer,
    submit_ole,
    submit_subsample,
    submit_vole,
)
from dapsi.services.setrecon import MappedSet, ReconAlice, ReconBob, intersection_probe
from dapsi.utils.bits import BitLike, as_bits, bits_to_str, hamming_distance, pack_bits, unpack_bits
from dapsi.utils.field import FieldElement, PrimeField, default_field
from dapsi.utils.randomness import SeedLike, spawn_rngs
from dapsi.utils.transport import Channel, LocalSession, Tag, Transcript

logger = logging.getLogger(__name__)

SEED_BYTES = 16
ROLES = ('alice', 'bob', 'dealer')


# Permute-and-partition

@dataclass(frozen=True)
class Partition:
    """A vector after the seeded permutation: bin contents and bin parities."""
    seed: bytes
    sub_vectors: Tuple[str, ...]
    parity_vec: Tuple[int, ...]

    @property
    def n_bins(self) -> int:
        return len(self.parity_vec)


def seeded_permutation(seed: bytes, length: int) -> np.ndarray:
    """The permutation pi_seed of range(length); identical for both parties."""
    words = np.frombuffer(bytes(seed[:SEED_BYTES]).ljust(SEED_BYTES, b'\0'), dtype=np.uint32)
    return np.random.default_rng(words).permutation(length)


def bin_index(positions: np.ndarray, length: int, n_bins: int) -> np.ndarray:
    """Bin of each permuted position under ``numpy.array_split(length, n_bins)``."""
    positions = np.asarray(positions, dtype=np.int64)
    q, r = divmod(length, n_bins)
    if q == 0:
        return positions
    big = r * (q + 1)
    return np.where(positions < big, positions // (q + 1), r + (positions - big) // q)


def permute_and_partition(v: BitLike, seed: bytes, params: HamParams) -> Partition:
    """
    Apply pi_seed and cut the result into N near-equal contiguous bins.

    Args:
        v: Bit vector of length params.vector_len
        seed: Shared permutation seed
        params: Hamming parameters (N = params.n_bins)

    Returns:
        Partition with sub-vector strings and parity bits
    """
    bits = as_bits(v)
    if bits.size != params.vector_len:
        raise ValueError(f"Expected a vector of length {params.vector_len}, got {bits.size}")
    permuted = bits[seeded_permutation(seed, bits.size)]
    blocks = np.array_split(permuted, params.n_bins)
    return Partition(seed=bytes(seed),
                     sub_vectors=tuple(bits_to_str(b) for b in blocks),
                     parity_vec=tuple(int(b.sum()) & 1 for b in blocks))


@dataclass(frozen=True)
class BinTrial:
    """Where ``diff_count`` differing positions land after one random permutation."""
    occupied_bins: int
    parity_distance: int


def bin_collision_trial(params: HamParams, diff_count: int, rng: np.random.Generator) -> BinTrial:
    """Drop ``diff_count`` differing positions into bins through a fresh seed."""
    length = params.vector_len
    seed = rng.bytes(SEED_BYTES)
    perm = seeded_permutation(seed, length)
    where = np.empty(length, dtype=np.int64)
    where[perm] = np.arange(length)
    positions = rng.choice(length, size=diff_count, replace=False)
    counts = np.bincount(bin_index(where[positions], length, params.n_bins), minlength=params.n_bins)
    return BinTrial(int(np.count_nonzero(counts)), int(np.count_nonzero(counts & 1)))


def occupied_bins_trial(params: HamParams, diff_count: int, rng: np.random.Generator) -> int:
    return bin_collision_trial(params, diff_count, rng).occupied_bins


def encode_partition(partition: Partition, field: Optional[PrimeField] = None) -> MappedSet:
    """S' = { prf(K_seed, i || bits of bin i) }, with K_seed public."""
    field = field or default_field()
    key = derive_public_key(partition.seed, field)
    messages = [struct.pack('<I', i) + s.encode('ascii') for i, s in enumerate(partition.sub_vectors)]
    # plain reconciliation over N bins uses at most 3N - 1 points
    reserved = reserved_abscissas(len(messages), 3 * len(messages))
    return MappedSet.of(slotted_prf_set(key, messages, reserved, field))


# Restricted query: AHE key set

@dataclass(frozen=True)
class KeySet:
    """(d+1) rows of ciphertexts; row i hides the key chunks iff HD = i."""
    rows: Tuple[Tuple[Ciphertext, ...], ...]

    @property
    def threshold(self) -> int:
        return len(self.rows) - 1

    @property
    def chunk_count(self) -> int:
        return len(self.rows[0]) if self.rows else 0


def encrypt_parity(pk: AhePublicKey, parity: Sequence[int], rng: np.random.Generator) -> List[Ciphertext]:
    return [ahe_encrypt(pk, int(bit), rng) for bit in parity]


def encrypted_distance(pk: AhePublicKey, enc_x: Sequence[Ciphertext], y: Sequence[int]) -> Ciphertext:
    """Enc(HD(X, Y)) = sum Enc(X_i) + w(Y) - 2 * sum over Y_i = 1 of Enc(X_i)."""
    if len(enc_x) != len(y):
        raise ProtocolViolation(f"{len(enc_x)} encrypted bits for {len(y)} parity bits")
    group = pk.group
    total = ahe_trivial(group, 0)
    dot = ahe_trivial(group, 0)
    for c, bit in zip(enc_x, y):
        total = ahe_add(total, c)
        if bit:
            dot = ahe_add(dot, c)
    return ahe_add(ahe_add(total, ahe_trivial(group, int(sum(y)))), ahe_scale(dot, -2))


def build_keyset(pk: AhePublicKey, enc_hd: Ciphertext, key: PrfKey, threshold: int,
                 rng: np.random.Generator, field: Optional[PrimeField] = None) -> KeySet:
    """
    Row i, chunk j: r_ij * (Enc(HD) - i) + Enc(chunk_j) with r_ij uniform nonzero.
    """
    field = field or default_field()
    group = pk.group
    chunks = key_to_chunks(key, field, pk.msg_bits).chunks
    rows = []
    for i in range(threshold + 1):
        shifted = ahe_add(enc_hd, ahe_trivial(group, -i))
        rows.append(tuple(ahe_add(ahe_scale(shifted, group.random_exponent(rng)), ahe_encrypt(pk, c, rng))
                          for c in chunks))
    return KeySet(tuple(rows))


def _open_row(kp: AheKeypair, row: Sequence[Ciphertext], field: PrimeField) -> Optional[PrfKey]:
    chunks = []
    for c in row:
        try:
            chunks.append(ahe_decrypt(kp, c))
        except DecryptOutOfRange:
            return None
    try:
        return chunks_to_key(KeyChunks(tuple(chunks), kp.msg_bits), field)
    except ChunkOverflow:
        return None


def open_keyset(kp: AheKeypair, keyset: KeySet, field: Optional[PrimeField] = None) -> List[Optional[PrfKey]]:
    """Decrypt every row; rows that do not decode to a key give None."""
    field = field or default_field()
    return [_open_row(kp, row, field) for row in keyset.rows]


def encode_keysets(keysets: Sequence[KeySet], pk: AhePublicKey) -> bytes:
    rows = keysets[0].threshold + 1 if keysets else 0
    cols = keysets[0].chunk_count if keysets else 0
    flat = [c for ks in keysets for row in ks.rows for c in row]
    return struct.pack('<III', len(keysets), rows, cols) + encode_ciphertexts(flat, pk.group)


def decode_keysets(data: bytes, pk: AhePublicKey) -> List[KeySet]:
    n, rows, cols = struct.unpack_from('<III', data, 0)
    flat, _ = decode_ciphertexts(data, pk.group, 12)
    if len(flat) != n * rows * cols:
        raise ProtocolViolation("Key set payload does not match its shape")
    per_set = rows * cols
    return [KeySet(tuple(tuple(flat[s * per_set + r * cols:s * per_set + (r + 1) * cols])
                         for r in range(rows)))
            for s in range(n)]


@dataclass
class RestrictedQuery:
    """Both parties' view of one in-process restricted query."""
    alice_part: Partition
    bob_part: Partition
    keyset: KeySet
    opened: List[Optional[PrfKey]]

    @property
    def recovered_key(self) -> Optional[PrfKey]:
        return next((k for k in self.opened if k is not None), None)


def ham_query_restricted(a: BitLike, b: BitLike, key: PrfKey, params: HamParams,
                         rng: np.random.Generator, keypair: Optional[AheKeypair] = None) -> RestrictedQuery:
    """
    One restricted query without channels: Alice learns ``key`` when the
    parity distance of the two partitions is at most d.
    """
    field = params.field
    seed = rng.bytes(SEED_BYTES)
    alice_part = permute_and_partition(a, seed, params)
    bob_part = permute_and_partition(b, seed, params)
    kp = keypair or ahe_keygen(params.msg_bits, params.group, rng)
    enc_x = encrypt_parity(kp.pk, alice_part.parity_vec, rng)
    enc_hd = encrypted_distance(kp.pk, enc_x, bob_part.parity_vec)
    keyset = build_keyset(kp.pk, enc_hd, key, params.threshold, rng, field)
    return RestrictedQuery(alice_part, bob_part, keyset, open_keyset(kp, keyset, field))


# Party outcomes

@dataclass
class HamMatch:
    """Alice's record of one (a_i, b_j) pair that passed her checks."""
    alice_index: int
    bob_index: int
    key: Optional[PrfKey] = None
    vector: Optional[np.ndarray] = None


@dataclass
class AliceReport:
    hits: List[HamMatch] = dc_field(default_factory=list)
    released: List[HamMatch] = dc_field(default_factory=list)
    rejected: List[Tuple[int, int]] = dc_field(default_factory=list)


@dataclass
class HamPsiResult:
    """Released pairs plus everything Alice saw and the per-party transcripts."""
    pairs: List[Tuple[np.ndarray, np.ndarray]]
    matches: List[Tuple[int, int]]
    hits: List[HamMatch]
    rejected: List[Tuple[int, int]]
    transcripts: Dict[str, Transcript]


def _hello(*fields: int) -> bytes:
    return struct.pack(f'<{len(fields)}I', *fields)


def _check_hello(payload: bytes, *expected: int) -> None:
    got = struct.unpack_from(f'<{len(expected)}I', payload, 0)
    if tuple(got) != tuple(expected):
        raise ProtocolViolation(f"Parameter mismatch: peer has {got}, expected {tuple(expected)}")


def _split_columns(z: Sequence[Sequence[int]], n: int) -> List[List[FieldElement]]:
    """Point-major VOLE output -> one evaluation vector per component."""
    return [[row[j] for row in z] for j in range(n)]


def _deposit(dealer: Channel, field: PrimeField, inputs: Sequence[Tuple[List[int], List[int]]]) -> None:
    """Bob's OLE (one component) or VOLE (several) batch."""
    if not inputs:
        return
    if len(inputs) == 1:
        submit_ole(dealer, field, *inputs[0])
        return
    us = [[u[k] for u, _ in inputs] for k in range(len(inputs[0][0]))]
    vs = [[v[k] for _, v in inputs] for k in range(len(inputs[0][1]))]
    submit_vole(dealer, field, us, vs)


def _collect(dealer: Channel, field: PrimeField, xs: Sequence[int], n: int) -> List[List[FieldElement]]:
    if n == 0:
        return []
    if n == 1:
        return [request_ole(dealer, field, xs)]
    return _split_columns(request_vole(dealer, field, xs), n)


# Hamming PSI parties

class HammingAlice:
    """Alice's side of HamPSI: one query per vector against Bob's whole set."""

    def __init__(self, vectors: Sequence[BitLike], params: HamParams, rng: np.random.Generator,
                 keypair: Optional[AheKeypair] = None, release: bool = True, first_hit: bool = False):
        self.vectors = [as_bits(v) for v in vectors]
        self.params = params
        self.rng = rng
        self.keypair = keypair
        self.release = release
        self.first_hit = first_hit

    def run(self, bob: Channel, dealer: Channel) -> AliceReport:
        params = self.params
        kp = self.keypair or ahe_keygen(params.msg_bits, params.group, self.rng)
        bob.send(Tag.HELLO, _hello(params.vector_len, params.threshold, params.n_bins))
        bob.send(Tag.PUBKEY, encode_public_key(kp.pk))
        report = AliceReport()
        for i, a in enumerate(self.vectors):
            hits = self._query(i, a, kp, bob, dealer)
            report.hits.extend(hits)
            if self.release:
                self._recover(a, hits, bob, report)
        bob.send(Tag.DONE)
        dealer.send(Tag.DONE)
        logger.info("Alice: %d hit(s), %d released, %d rejected",
                    len(report.hits), len(report.released), len(report.rejected))
        return report

    def _query(self, i: int, a: np.ndarray, kp: AheKeypair, bob: Channel, dealer: Channel) -> List[HamMatch]:
        params = self.params
        field = params.field
        bob.send(Tag.QUERY, struct.pack('<I', i))
        _, seed = bob.expect(Tag.SEED)
        part = permute_and_partition(a, seed, params)
        bob.send(Tag.AHE_BITS, encode_ciphertexts(encrypt_parity(kp.pk, part.parity_vec, self.rng), kp.pk.group))
        _, payload = bob.expect(Tag.KEYSET)
        keysets = decode_keysets(payload, kp.pk)
        candidates = [[k for k in open_keyset(kp, ks, field) if k is not None] for ks in keysets]

        recon = ReconAlice(encode_partition(part, field), ReconParams.plain(params.n_bins, params.threshold, field))
        evals = _collect(dealer, field, recon.ole_inputs(), len(keysets))
        hits = []
        for j, (keys, z) in enumerate(zip(candidates, evals)):
            for key in keys:
                if recon.reconcile(z, key) is not None:
                    hits.append(HamMatch(i, j, key))
                    break
            if hits and self.first_hit:
                break
        logger.debug("Query %d: %d key(s) opened, %d hit(s)", i, sum(map(len, candidates)), len(hits))
        return hits

    def _recover(self, a: np.ndarray, hits: Sequence[HamMatch], bob: Channel, report: AliceReport) -> None:
        for hit in hits:
            bob.send(Tag.RECOVER, struct.pack('<I', hit.bob_index) + hit.key.to_bytes() + pack_bits([a]))
            tag, payload = bob.expect(Tag.RELEASE, Tag.REJECT)
            if tag == Tag.RELEASE:
                hit.vector = unpack_bits(payload, 1, self.params.vector_len)[0]
                report.released.append(hit)
            else:
                report.rejected.append((hit.alice_index, hit.bob_index))


class HammingBob:
    """Bob's side of HamPSI: answers queries and guards the release of his vectors."""

    def __init__(self, vectors: Sequence[BitLike], params: HamParams, rng: np.random.Generator):
        self.vectors = [as_bits(v) for v in vectors]
        self.params = params
        self.rng = rng
        self._keys: List[PrfKey] = []

    def run(self, alice: Channel, dealer: Channel) -> List[Tuple[int, int]]:
        """Serve Alice until DONE; returns the (i, j) pairs Bob released."""
        params = self.params
        _, payload = alice.expect(Tag.HELLO)
        _check_hello(payload, params.vector_len, params.threshold, params.n_bins)
        _, payload = alice.expect(Tag.PUBKEY)
        pk = decode_public_key(payload)
        released = []
        query = -1
        while True:
            tag, payload = alice.expect(Tag.QUERY, Tag.RECOVER, Tag.DONE)
            if tag == Tag.DONE:
                break
            if tag == Tag.QUERY:
                (query,) = struct.unpack('<I', payload)
                self._answer(pk, alice, dealer)
            else:
                j = self._release(payload, alice)
                if j is not None:
                    released.append((query, j))
        dealer.send(Tag.DONE)
        return released

    def _answer(self, pk: AhePublicKey, alice: Channel, dealer: Channel) -> None:
        params = self.params
        field = params.field
        seed = self.rng.bytes(SEED_BYTES)
        alice.send(Tag.SEED, seed)
        parts = [permute_and_partition(b, seed, params) for b in self.vectors]
        _, payload = alice.expect(Tag.AHE_BITS)
        enc_x, _ = decode_ciphertexts(payload, pk.group)
        self._keys = [random_prf_key(field, self.rng) for _ in self.vectors]
        keysets = [build_keyset(pk, encrypted_distance(pk, enc_x, part.parity_vec), key,
                                params.threshold, self.rng, field)
                   for part, key in zip(parts, self._keys)]
        alice.send(Tag.KEYSET, encode_keysets(keysets, pk))

        recon_params = ReconParams.plain(params.n_bins, params.threshold, field)
        inputs = [ReconBob(encode_partition(part, field), recon_params).ole_inputs(self.rng, key)
                  for part, key in zip(parts, self._keys)]
        _deposit(dealer, field, inputs)

    def _release(self, payload: bytes, alice: Channel) -> Optional[int]:
        params = self.params
        (j,) = struct.unpack_from('<I', payload, 0)
        claimed = PrfKey(int.from_bytes(payload[4:4 + config.ELEMENT_BYTES], 'little'))
        a = unpack_bits(payload[4 + config.ELEMENT_BYTES:], 1, params.vector_len)[0]
        if (j < len(self._keys) and claimed == self._keys[j]
                and hamming_distance(a, self.vectors[j]) <= params.threshold):
            alice.send(Tag.RELEASE, pack_bits([self.vectors[j]]))
            return j
        logger.warning("Rejecting Recover for vector %d", j)
        alice.send(Tag.REJECT)
        return None


def run_hampsi_alice(bob: Channel, dealer: Channel, vectors: Sequence[BitLike], params: HamParams,
                     rng: np.random.Generator, release: bool = True) -> AliceReport:
    return HammingAlice(vectors, params, rng, release=release).run(bob, dealer)


def run_hampsi_bob(alice: Channel, dealer: Channel, vectors: Sequence[BitLike], params: HamParams,
                   rng: np.random.Generator) -> List[Tuple[int, int]]:
    return HammingBob(vectors, params, rng).run(alice, dealer)


def _run_local(alice_run: Callable[[Channel, Channel], AliceReport],
               bob_run: Callable[[Channel, Channel], object],
               field: PrimeField) -> Tuple[AliceReport, Dict[str, Transcript]]:
    session = LocalSession(ROLES, [('alice', 'bob'), ('alice', 'dealer'), ('bob', 'dealer')])
    results = session.run({
        'alice': lambda: alice_run(session.channel('alice', 'bob'), session.channel('alice', 'dealer')),
        'bob': lambda: bob_run(session.channel('bob', 'alice'), session.channel('bob', 'dealer')),
        'dealer': lambda: run_dealer(session.channel('dealer', 'alice'), session.channel('dealer', 'bob'), field),
    })
    return results['alice'], session.transcripts


def _result(report: AliceReport, alice_vectors: Sequence[BitLike],
            transcripts: Dict[str, Transcript]) -> HamPsiResult:
    return HamPsiResult(
        pairs=[(as_bits(alice_vectors[m.alice_index]), m.vector) for m in report.released],
        matches=[(m.alice_index, m.bob_index) for m in report.released],
        hits=report.hits,
        rejected=report.rejected,
        transcripts=transcripts,
    )


def ham_psi(alice_vectors: Sequence[BitLike], bob_vectors: Sequence[BitLike], params: HamParams,
            seed: SeedLike = None, release: bool = True) -> HamPsiResult:
    """
    All pairs (a, b) with HD(a, b) <= d, up to the configured false-positive rate.

    Without ``release`` Alice stops after the key checks and ``hits`` holds
    the candidate pairs.
    """
    rngs = spawn_rngs(seed, ROLES)
    report, transcripts = _run_local(
        lambda bob, dealer: run_hampsi_alice(bob, dealer, alice_vectors, params, rngs['alice'], release),
        lambda alice, dealer: run_hampsi_bob(alice, dealer, bob_vectors, params, rngs['bob']),
        params.field)
    return _result(report, alice_vectors, transcripts)


def t_ham_query(a: BitLike, b: BitLike, params: HamParams,
                seed: SeedLike = None) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """
    Single-pair query: (a, b) when HD(a, b) <= d (with probability >= 1 - fpr), else None.

    Raises:
        VerifyFailed: Alice's checks passed but Bob refused the release
    """
    result = ham_psi([a], [b], params, seed)
    if result.rejected:
        raise VerifyFailed("Bob rejected the Recover request")
    return result.pairs[0] if result.pairs else None


def ham_contain_query(a: BitLike, bob_vectors: Sequence[BitLike], params: HamParams,
                      seed: SeedLike = None) -> Optional[Tuple[int, PrfKey]]:
    """First (j, kappa_j) whose key unblinds a successful reconciliation, or None."""
    rngs = spawn_rngs(seed, ROLES)
    alice = HammingAlice([a], params, rngs['alice'], release=False, first_hit=True)
    bob = HammingBob(bob_vectors, params, rngs['bob'])
    report, _ = _run_local(alice.run, bob.run, params.field)
    if not report.hits:
        return None
    return report.hits[0].bob_index, report.hits[0].key


# Sub-sampled variant

def subsample(v: BitLike, params: SubSampleParams, field: Optional[PrimeField] = None) -> List[FieldElement]:
    """The T masked PRF samples of ``v``."""
    return masked_prf_set(params.key, params.masks, v, field)


def _sample_recon_params(sample_size: int, match_count: int, field: PrimeField) -> ReconParams:
    # 2T - t + 2 points
    return ReconParams.exp(sample_size, sample_size - match_count, field)


def _check_sample_cap(sample_size: int, match_count: int, bob_count: int, compute_cap: int) -> None:
    work = comb(sample_size, match_count) * bob_count
    if work > compute_cap:
        raise ComputeCapExceeded(f"C({sample_size}, {match_count}) * {bob_count} = {work} "
                                 f"exceeds the cap of {compute_cap}")


class SampleAlice:
    """Alice's side of the sub-sampled protocol."""

    def __init__(self, vectors: Sequence[BitLike], vector_len: int, sample_size: int, match_count: int,
                 field: PrimeField, compute_cap: int = config.EXP_COMPUTE_CAP, release: bool = True):
        self.vectors = [as_bits(v) for v in vectors]
        self.vector_len = vector_len
        self.sample_size = sample_size
        self.match_count = match_count
        self.field = field
        self.compute_cap = compute_cap
        self.release = release

    def run(self, bob: Channel, dealer: Channel) -> AliceReport:
        T, t = self.sample_size, self.match_count
        field = self.field
        bob.send(Tag.HELLO, _hello(self.vector_len, T, t))
        _, payload = bob.expect(Tag.HELLO)
        (bob_count,) = struct.unpack('<I', payload)
        _check_sample_cap(T, t, bob_count, self.compute_cap)
        samples = request_subsample(dealer, field, self.vectors)
        params = _sample_recon_params(T, t, field)
        report = AliceReport()
        for i, (a, sample) in enumerate(zip(self.vectors, samples)):
            bob.send(Tag.QUERY, struct.pack('<I', i))
            alice_set = MappedSet.of(sample)
            recon = ReconAlice(alice_set, params)
            probe = intersection_probe(alice_set, params, t)
            evals = _collect(dealer, field, recon.ole_inputs(), bob_count)
            hits = [HamMatch(i, j) for j, z in enumerate(evals) if next(probe.accepted(z), None) is not None]
            report.hits.extend(hits)
            if self.release:
                for hit in hits:
                    bob.send(Tag.RECOVER, struct.pack('<I', hit.bob_index) + pack_bits([a]))
                    tag, payload = bob.expect(Tag.RELEASE, Tag.REJECT)
                    if tag == Tag.RELEASE:
                        hit.vector = unpack_bits(payload, 1, self.vector_len)[0]
                        report.released.append(hit)
                    else:
                        report.rejected.append((i, hit.bob_index))
        bob.send(Tag.DONE)
        dealer.send(Tag.DONE)
        return report


class SampleBob:
    """Bob's side: owns the masks and kappa_s, and re-checks t-of-T agreement on Recover."""

    def __init__(self, vectors: Sequence[BitLike], params: SubSampleParams, field: PrimeField,
                 rng: np.random.Generator):
        self.vectors = [as_bits(v) for v in vectors]
        self.params = params
        self.field = field
        self.rng = rng
        self.samples = [subsample(b, params, field) for b in self.vectors]

    def run(self, alice: Channel, dealer: Channel) -> List[Tuple[int, int]]:
        params = self.params
        T, t = params.sample_size, params.match_count
        submit_subsample(dealer, params.key, params.masks)
        _, payload = alice.expect(Tag.HELLO)
        _check_hello(payload, params.vector_len, T, t)
        alice.send(Tag.HELLO, struct.pack('<I', len(self.vectors)))
        recon_params = _sample_recon_params(T, t, self.field)
        bob_recons = [ReconBob(MappedSet.of(s), recon_params) for s in self.samples]
        released = []
        query = -1
        while True:
            tag, payload = alice.expect(Tag.QUERY, Tag.RECOVER, Tag.DONE)
            if tag == Tag.DONE:
                break
            if tag == Tag.QUERY:
                (query,) = struct.unpack('<I', payload)
                _deposit(dealer, self.field, [r.ole_inputs(self.rng) for r in bob_recons])
                continue
            (j,) = struct.unpack_from('<I', payload, 0)
            a = unpack_bits(payload[4:], 1, params.vector_len)[0]
            if j < len(self.vectors) and self._agreement(a, j) >= t:
                alice.send(Tag.RELEASE, pack_bits([self.vectors[j]]))
                released.append((query, j))
            else:
                logger.warning("Rejecting Recover for vector %d", j)
                alice.send(Tag.REJECT)
        dealer.send(Tag.DONE)
        return released

    def _agreement(self, a: np.ndarray, j: int) -> int:
        sample = subsample(a, self.params, self.field)
        return sum(x == y for x, y in zip(sample, self.samples[j]))


def ham_psi_sample(alice_vectors: Sequence[BitLike], bob_vectors: Sequence[BitLike],
                   sample_size: int, match_count: int, mask_weight: int,
                   field: Optional[PrimeField] = None, seed: SeedLike = None,
                   compute_cap: int = config.EXP_COMPUTE_CAP, release: bool = True) -> HamPsiResult:
    """
    Pairs whose masked samples agree in at least ``match_count`` of ``sample_size`` places.

    Raises:
        ComputeCapExceeded: C(T, t) * |B| is above ``compute_cap``
    """
    field = field or default_field()
    _check_sample_cap(sample_size, match_count, len(bob_vectors), compute_cap)
    rngs = spawn_rngs(seed, ROLES)
    report, transcripts = _run_local(
        lambda bob, dealer: run_sample_alice(bob, dealer, alice_vectors, sample_size, match_count,
                                             field, compute_cap, release),
        lambda alice, dealer: run_sample_bob(alice, dealer, bob_vectors, sample_size, match_count,
                                             mask_weight, rngs['bob'], field),
        field)
    return _result(report, alice_vectors, transcripts)


def t_ham_query_sample(a: BitLike, b: BitLike, sample_size: int, match_count: int, mask_weight: int,
                       field: Optional[PrimeField] = None,
                       seed: SeedLike = None) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    result = ham_psi_sample([a], [b], sample_size, match_count, mask_weight, field, seed)
    if result.rejected:
        raise VerifyFailed("Bob rejected the Recover request")
    return result.pairs[0] if result.pairs else None


def run_sample_alice(bob: Channel, dealer: Channel, vectors: Sequence[BitLike], sample_size: int,
                     match_count: int, field: Optional[PrimeField] = None,
                     compute_cap: int = config.EXP_COMPUTE_CAP, release: bool = True) -> AliceReport:
    vector_len = as_bits(vectors[0]).size if vectors else 0
    alice = SampleAlice(vectors, vector_len, sample_size, match_count, field or default_field(),
                        compute_cap, release)
    return alice.run(bob, dealer)


def run_sample_bob(alice: Channel, dealer: Channel, vectors: Sequence[BitLike], sample_size: int,
                   match_count: int, mask_weight: int, rng: np.random.Generator,
                   field: Optional[PrimeField] = None) -> List[Tuple[int, int]]:
    """Bob draws the masks and kappa_s, deposits them with the dealer, then serves Alice."""
    if not vectors:
        raise ValueError("Bob needs at least one vector to fix the mask length")
    field = field or default_field()
    vector_len = as_bits(vectors[0]).size
    params = SubSampleParams(sample_size, match_count, sample_masks(vector_len, sample_size, mask_weight, rng),
                             random_prf_key(field, rng))
    return SampleBob(vectors, params, field, rng).run(alice, dealer)
