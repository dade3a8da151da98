"""
Exact-match PSI engines used by IntPSI.

Both engines take two lists of opaque byte strings and leave both parties
with the intersection: Alice learns it first and reports Bob's matching
positions back to him.
"""

import logging
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Set

import numpy as np
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey

from dapsi.exceptions import ProtocolViolation
from dapsi.utils.randomness import SeedLike, spawn_rngs
from dapsi.utils.transport import Channel, LocalSession, Tag, Transcript

logger = logging.getLogger(__name__)

POINT_BYTES = 32
_HASH_DOMAIN = b'dapsi/psi-element'


def psi_plain_oracle(alice: Iterable[bytes], bob: Iterable[bytes]) -> Set[bytes]:
    """Plain set intersection; the ideal functionality."""
    return set(alice) & set(bob)


# Wire codecs

def _encode_blobs(items: Sequence[bytes]) -> bytes:
    parts = [struct.pack('<I', len(items))]
    for item in items:
        parts.append(struct.pack('<H', len(item)))
        parts.append(bytes(item))
    return b''.join(parts)


def _decode_blobs(data: bytes) -> List[bytes]:
    (count,) = struct.unpack_from('<I', data, 0)
    offset = 4
    out = []
    for _ in range(count):
        (n,) = struct.unpack_from('<H', data, offset)
        offset += 2
        out.append(data[offset:offset + n])
        offset += n
    if offset != len(data):
        raise ProtocolViolation("Trailing bytes after element list")
    return out


def _encode_points(points: Sequence[bytes]) -> bytes:
    return struct.pack('<I', len(points)) + b''.join(points)


def _decode_points(data: bytes) -> List[bytes]:
    (count,) = struct.unpack_from('<I', data, 0)
    if len(data) != 4 + count * POINT_BYTES:
        raise ProtocolViolation("Blinded element list has the wrong size")
    return [data[4 + i * POINT_BYTES:4 + (i + 1) * POINT_BYTES] for i in range(count)]


def _encode_indices(indices: Sequence[int]) -> bytes:
    return struct.pack(f'<I{len(indices)}I', len(indices), *indices)


def _decode_indices(data: bytes) -> List[int]:
    (count,) = struct.unpack_from('<I', data, 0)
    return list(struct.unpack_from(f'<{count}I', data, 4))


def _bob_matches(bob_elements: Sequence[bytes], payload: bytes) -> Set[bytes]:
    indices = _decode_indices(payload)
    if any(i >= len(bob_elements) for i in indices):
        raise ProtocolViolation("Result index outside Bob's list")
    return {bob_elements[i] for i in indices}


class PsiBackend(ABC):
    """A two-party exact PSI engine driven over one channel."""
    name = ''

    @abstractmethod
    def run_alice(self, channel: Channel, elements: Sequence[bytes], rng: np.random.Generator) -> Set[bytes]:
        pass

    @abstractmethod
    def run_bob(self, channel: Channel, elements: Sequence[bytes], rng: np.random.Generator) -> Set[bytes]:
        pass


class OracleBackend(PsiBackend):
    """Bob sends his elements in the clear; only for tests and baselines."""
    name = 'oracle'

    def run_alice(self, channel: Channel, elements: Sequence[bytes], rng: np.random.Generator) -> Set[bytes]:
        _, payload = channel.expect(Tag.PSI_BLINDED)
        bob_elements = _decode_blobs(payload)
        mine = set(elements)
        channel.send(Tag.PSI_RESULT, _encode_indices([i for i, e in enumerate(bob_elements) if e in mine]))
        return psi_plain_oracle(elements, bob_elements)

    def run_bob(self, channel: Channel, elements: Sequence[bytes], rng: np.random.Generator) -> Set[bytes]:
        elements = list(elements)
        channel.send(Tag.PSI_BLINDED, _encode_blobs(elements))
        _, payload = channel.expect(Tag.PSI_RESULT)
        return _bob_matches(elements, payload)


def hash_to_point(element: bytes) -> bytes:
    """SHA-256 of the element as an X25519 u-coordinate (top bit cleared)."""
    h = hashes.Hash(hashes.SHA256())
    h.update(_HASH_DOMAIN + bytes(element))
    digest = h.finalize()
    return digest[:31] + bytes([digest[31] & 0x7F])


def blind(scalar: X25519PrivateKey, point: bytes) -> bytes:
    """point^scalar; blinding with two scalars commutes."""
    return scalar.exchange(X25519PublicKey.from_public_bytes(point))


def random_scalar(rng: np.random.Generator) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(rng.bytes(POINT_BYTES))


class DhBackend(PsiBackend):
    """
    Commutative-blinding PSI over X25519.

    Alice -> Bob: H(a)^alpha. Bob -> Alice: (H(a)^alpha)^beta in Alice's
    order, then H(b)^beta. Alice raises Bob's list to alpha, matches, and
    returns Bob's matching positions.
    """
    name = 'dh'

    def run_alice(self, channel: Channel, elements: Sequence[bytes], rng: np.random.Generator) -> Set[bytes]:
        elements = list(elements)
        alpha = random_scalar(rng)
        channel.send(Tag.PSI_BLINDED, _encode_points([blind(alpha, hash_to_point(e)) for e in elements]))
        _, payload = channel.expect(Tag.PSI_REBLINDED)
        double_alice = _decode_points(payload)
        if len(double_alice) != len(elements):
            raise ProtocolViolation("Bob re-blinded a different number of elements")
        _, payload = channel.expect(Tag.PSI_BLINDED)
        double_bob = [blind(alpha, point) for point in _decode_points(payload)]

        lookup: Dict[bytes, bytes] = dict(zip(double_alice, elements))
        matched_positions = [i for i, point in enumerate(double_bob) if point in lookup]
        channel.send(Tag.PSI_RESULT, _encode_indices(matched_positions))
        result = {lookup[double_bob[i]] for i in matched_positions}
        logger.debug("DH PSI: %d of %d elements matched", len(result), len(elements))
        return result

    def run_bob(self, channel: Channel, elements: Sequence[bytes], rng: np.random.Generator) -> Set[bytes]:
        elements = list(elements)
        beta = random_scalar(rng)
        _, payload = channel.expect(Tag.PSI_BLINDED)
        channel.send(Tag.PSI_REBLINDED, _encode_points([blind(beta, point) for point in _decode_points(payload)]))
        channel.send(Tag.PSI_BLINDED, _encode_points([blind(beta, hash_to_point(e)) for e in elements]))
        _, payload = channel.expect(Tag.PSI_RESULT)
        return _bob_matches(elements, payload)


_BACKENDS = {backend.name: backend for backend in (OracleBackend, DhBackend)}


def get_backend(name: str) -> PsiBackend:
    if name not in _BACKENDS:
        raise ValueError(f"Unknown PSI backend {name!r}; choose from {sorted(_BACKENDS)}")
    return _BACKENDS[name]()


@dataclass
class PsiRun:
    intersection: Set[bytes]
    transcripts: Dict[str, Transcript]


def run_psi(alice: Sequence[bytes], bob: Sequence[bytes], backend: PsiBackend,
            seed: SeedLike = None) -> PsiRun:
    """Run a backend in-process; both parties must agree on the result."""
    rngs = spawn_rngs(seed, ('alice', 'bob'))
    session = LocalSession(('alice', 'bob'), [('alice', 'bob')])
    results = session.run({
        'alice': lambda: backend.run_alice(session.channel('alice', 'bob'), alice, rngs['alice']),
        'bob': lambda: backend.run_bob(session.channel('bob', 'alice'), bob, rngs['bob']),
    })
    if results['alice'] != results['bob']:
        raise ProtocolViolation("Parties disagree on the intersection")
    return PsiRun(results['alice'], session.transcripts)


def psi_dh(alice: Sequence[bytes], bob: Sequence[bytes], seed: SeedLike = None) -> PsiRun:
    return run_psi(alice, bob, DhBackend(), seed)
