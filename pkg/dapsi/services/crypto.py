"""
Cryptographic substrate: exponential ElGamal with a small plaintext space,
an HMAC-SHA256 PRF into F_p, and 24-bit key chunking.
"""

import logging
import struct
from dataclasses import dataclass, field as dc_field
from itertools import count
from typing import Dict, List, Optional, Sequence, Tuple, Union

import gmpy2
import numpy as np
from cryptography.hazmat.primitives import hashes, hmac

from dapsi import config
from dapsi.exceptions import ChunkOverflow, DecryptOutOfRange
from dapsi.utils.bits import BitLike, as_bits
from dapsi.utils.field import FieldElement, PrimeField, default_field

logger = logging.getLogger(__name__)

# Safe primes p = 2q + 1 (RFC 2409 / RFC 3526 MODP groups).
_MODP_HEX = {
    'modp768': (
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
        "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
        "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
        "E485B576625E7EC6F44C42E9A63A3620FFFFFFFFFFFFFFFF"
    ),
    'modp1024': (
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
        "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
        "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
        "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
        "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE65381"
        "FFFFFFFFFFFFFFFF"
    ),
    'modp1536': (
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
        "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
        "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
        "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
        "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
        "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
        "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
        "670C354E4ABC9804F1746C08CA237327FFFFFFFFFFFFFFFF"
    ),
    'modp2048': (
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
        "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
        "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
        "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
        "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
        "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
        "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
        "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
        "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9"
        "DE2BCBF6955817183995497CEA956AE515D2261898FA0510"
        "15728E5A8AACAA68FFFFFFFFFFFFFFFF"
    ),
}

# Decryption table keys are the low 64 bits of a group element.
_TABLE_KEY_BITS = 64


@dataclass(frozen=True)
class ModpGroup:
    """Order-q subgroup of Z_p^* for a safe prime p, generated by 4."""
    name: str
    p: int
    q: int
    g: int

    @property
    def byte_len(self) -> int:
        return (self.p.bit_length() + 7) // 8

    def random_exponent(self, rng: np.random.Generator) -> int:
        nbytes = (self.q.bit_length() + 7) // 8 + 8
        return int.from_bytes(rng.bytes(nbytes), 'little') % (self.q - 1) + 1


def get_group(name: str = config.AHE_GROUP) -> ModpGroup:
    if name not in _MODP_HEX:
        raise ValueError(f"Unknown AHE group {name!r}; choose from {sorted(_MODP_HEX)}")
    p = int(_MODP_HEX[name], 16)
    return ModpGroup(name=name, p=p, q=(p - 1) // 2, g=4)


def group_names() -> List[str]:
    return sorted(_MODP_HEX)


@dataclass(frozen=True)
class AhePublicKey:
    group: ModpGroup
    h: int
    msg_bits: int = config.AHE_MSG_BITS


@dataclass(frozen=True)
class Ciphertext:
    """ElGamal pair (g^k, h^k * g^m)."""
    c1: int
    c2: int
    group: ModpGroup = dc_field(compare=False, repr=False)


class DlogTable:
    """
    Baby-step/giant-step discrete-log table for plaintexts in [0, 2^msg_bits).

    Baby steps g^j for j < 2^table_bits are stored under the low 64 bits of
    the element; a lookup walks at most 2^(msg_bits - table_bits) giant steps.
    """

    def __init__(self, group: ModpGroup, msg_bits: int, table_bits: Optional[int] = None):
        self.group = group
        self.msg_bits = msg_bits
        self.table_bits = table_bits if table_bits is not None else msg_bits - msg_bits // 3
        self._mask = (1 << _TABLE_KEY_BITS) - 1
        p = gmpy2.mpz(group.p)
        g = gmpy2.mpz(group.g)
        self._p = p
        self._baby: Dict[int, int] = {}
        cur = gmpy2.mpz(1)
        for j in range(1 << self.table_bits):
            self._baby.setdefault(int(cur) & self._mask, j)
            cur = cur * g % p
        self._giant_inv = gmpy2.powmod(g, -(1 << self.table_bits), p)
        self._giant_count = 1 << max(0, msg_bits - self.table_bits)

    def lookup(self, element: int) -> int:
        """Return m with g^m = element, or raise DecryptOutOfRange."""
        p = self._p
        cur = gmpy2.mpz(element)
        step = 1 << self.table_bits
        for i in range(self._giant_count):
            j = self._baby.get(int(cur) & self._mask)
            if j is not None:
                m = i * step + j
                if m < (1 << self.msg_bits) and gmpy2.powmod(self.group.g, m, p) == element:
                    return m
            cur = cur * self._giant_inv % p
        raise DecryptOutOfRange("Plaintext outside the decryption table")


@dataclass
class AheKeypair:
    """Alice's key material: public key, secret exponent and decryption table."""
    pk: AhePublicKey
    sk: int
    dlog_table: DlogTable

    @property
    def msg_bits(self) -> int:
        return self.pk.msg_bits


def ahe_keygen(msg_bits: int = config.AHE_MSG_BITS, group: Optional[ModpGroup] = None,
               rng: Optional[np.random.Generator] = None) -> AheKeypair:
    """
    Generate an exponential-ElGamal keypair.

    Args:
        msg_bits: Plaintext width covered by the decryption table
        group: MODP group (default from DAPSI_AHE_GROUP)
        rng: Randomness source

    Returns:
        AheKeypair with its decryption table built
    """
    group = group or get_group()
    rng = rng if rng is not None else np.random.default_rng()
    sk = group.random_exponent(rng)
    h = int(gmpy2.powmod(group.g, sk, group.p))
    logger.debug("AHE keypair on %s with %d-bit plaintexts", group.name, msg_bits)
    return AheKeypair(AhePublicKey(group, h, msg_bits), sk, DlogTable(group, msg_bits))


def ahe_encrypt(pk: AhePublicKey, m: int, rng: np.random.Generator) -> Ciphertext:
    group = pk.group
    k = group.random_exponent(rng)
    c1 = gmpy2.powmod(group.g, k, group.p)
    c2 = gmpy2.powmod(pk.h, k, group.p) * gmpy2.powmod(group.g, m, group.p) % group.p
    return Ciphertext(int(c1), int(c2), group)


def ahe_trivial(group: ModpGroup, m: int) -> Ciphertext:
    """Deterministic encryption (randomness 0) of a public constant."""
    return Ciphertext(1, int(gmpy2.powmod(group.g, m, group.p)), group)


def ahe_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    p = a.group.p
    return Ciphertext(a.c1 * b.c1 % p, a.c2 * b.c2 % p, a.group)


def ahe_scale(c: Ciphertext, s: int) -> Ciphertext:
    """Plaintext-scalar multiplication; negative scalars invert the ciphertext."""
    p = c.group.p
    return Ciphertext(int(gmpy2.powmod(c.c1, s, p)), int(gmpy2.powmod(c.c2, s, p)), c.group)


def ahe_rerandomize(pk: AhePublicKey, c: Ciphertext, rng: np.random.Generator) -> Ciphertext:
    return ahe_add(c, ahe_encrypt(pk, 0, rng))


def ahe_decrypt(kp: AheKeypair, c: Ciphertext) -> int:
    p = c.group.p
    element = c.c2 * gmpy2.powmod(c.c1, -kp.sk, p) % p
    return kp.dlog_table.lookup(int(element))


def encode_ciphertexts(ciphertexts: Sequence[Ciphertext], group: ModpGroup) -> bytes:
    width = group.byte_len
    parts = [struct.pack('<I', len(ciphertexts))]
    for c in ciphertexts:
        parts.append(c.c1.to_bytes(width, 'big'))
        parts.append(c.c2.to_bytes(width, 'big'))
    return b''.join(parts)


def decode_ciphertexts(data: bytes, group: ModpGroup, offset: int = 0) -> Tuple[List[Ciphertext], int]:
    width = group.byte_len
    (n,) = struct.unpack_from('<I', data, offset)
    offset += 4
    if len(data) < offset + 2 * width * n:
        raise ValueError("Truncated ciphertext vector")
    out = []
    for _ in range(n):
        c1 = int.from_bytes(data[offset:offset + width], 'big')
        c2 = int.from_bytes(data[offset + width:offset + 2 * width], 'big')
        out.append(Ciphertext(c1, c2, group))
        offset += 2 * width
    return out, offset


def encode_public_key(pk: AhePublicKey) -> bytes:
    name = pk.group.name.encode('ascii')
    return struct.pack('<BB', len(name), pk.msg_bits) + name + pk.h.to_bytes(pk.group.byte_len, 'big')


def decode_public_key(data: bytes) -> AhePublicKey:
    name_len, msg_bits = struct.unpack_from('<BB', data, 0)
    group = get_group(data[2:2 + name_len].decode('ascii'))
    h = int.from_bytes(data[2 + name_len:2 + name_len + group.byte_len], 'big')
    return AhePublicKey(group, h, msg_bits)


@dataclass(frozen=True)
class PrfKey:
    """PRF key kappa, an element of F_p."""
    value: int

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(config.ELEMENT_BYTES, 'little')


def random_prf_key(field: Optional[PrimeField] = None,
                   rng: Optional[np.random.Generator] = None) -> PrfKey:
    field = field or default_field()
    rng = rng if rng is not None else np.random.default_rng()
    return PrfKey(field.random_element(rng))


def _hmac_to_field(key: bytes, message: bytes, field: PrimeField) -> FieldElement:
    return _hmac_below(key, message, field.p)


def _hmac_below(key: bytes, message: bytes, bound: int) -> int:
    """HMAC-SHA256 output reduced into [0, bound) by rejection sampling."""
    bit_len = max(bound.bit_length(), 1)
    nbytes = (bit_len + 7) // 8
    mask = (1 << bit_len) - 1
    for counter in count():
        stream = b''
        block = 0
        while len(stream) < nbytes:
            mac = hmac.HMAC(key, hashes.SHA256())
            mac.update(message + struct.pack('<II', counter, block))
            stream += mac.finalize()
            block += 1
        value = int.from_bytes(stream[:nbytes], 'little') & mask
        if value < bound:
            return value
    raise AssertionError("unreachable")


def prf_field(key: PrfKey, index: Union[int, bytes], field: Optional[PrimeField] = None) -> FieldElement:
    """
    phi(kappa, index): keyed pseudorandom field element.

    Args:
        key: PRF key
        index: Non-negative integer or byte string
        field: Output field (default modulus if omitted)

    Returns:
        Element of F_p
    """
    field = field or default_field()
    if isinstance(index, int):
        if index < 0:
            raise ValueError("PRF index must be non-negative")
        message = b'i' + index.to_bytes(8, 'little')
    else:
        message = b'b' + bytes(index)
    return _hmac_to_field(key.to_bytes(), message, field)


def derive_public_key(seed: bytes, field: Optional[PrimeField] = None) -> PrfKey:
    """Public set-encoding key both parties derive from a shared seed."""
    field = field or default_field()
    return PrfKey(_hmac_to_field(bytes(seed), b'dapsi/encoding-key', field))


def reserved_abscissas(set_size: int, max_points: int) -> range:
    """Field values a reconciliation over ``set_size`` elements may evaluate at."""
    start = 2 * set_size + 2
    return range(start, start + max_points)


def slotted_prf_set(key: PrfKey, messages: Sequence[bytes], reserved: range,
                    field: Optional[PrimeField] = None) -> List[FieldElement]:
    """
    Element i is a PRF draw from the i-th residue class (mod len(messages)) of
    the field values outside ``reserved``.

    The elements are pairwise distinct and never land on a reserved value;
    element i depends only on the key, i and messages[i].

    Raises:
        ValueError: the field is too small to give every slot a value
    """
    field = field or default_field()
    slots = len(messages)
    lo, hi = min(reserved.start, field.p), min(reserved.stop, field.p)
    gap = hi - lo
    free = field.p - gap
    if free < slots:
        raise ValueError(f"F_{field.p} leaves {free} values for {slots} slots")
    out = []
    for i, message in enumerate(messages):
        r = _hmac_below(key.to_bytes(), b's' + message, (free - i + slots - 1) // slots)
        k = i + slots * r
        out.append(k if k < lo else k + gap)
    return out


def masked_prf_set(key: PrfKey, masks: Sequence[BitLike], v: BitLike,
                   field: Optional[PrimeField] = None) -> List[FieldElement]:
    """
    The sub-sampling map: element i is prf(key, i || (v AND mask_i)).

    Element i of two vectors agrees exactly when they agree on mask_i. The
    T elements are distinct and avoid every abscissa of a reconciliation
    over T elements (at most 2T + 1 points).
    """
    bits = as_bits(v)
    messages = []
    for i, mask in enumerate(masks):
        masked = np.packbits(bits & as_bits(mask)).tobytes()
        messages.append(struct.pack('<I', i) + masked)
    size = len(messages)
    return slotted_prf_set(key, messages, reserved_abscissas(size, 2 * size + 1), field)


@dataclass(frozen=True)
class KeyChunks:
    """Little-endian base-2^chunk_bits digits of a PRF key."""
    chunks: Tuple[int, ...]
    chunk_bits: int = config.AHE_MSG_BITS


def chunk_count(field: Optional[PrimeField] = None, chunk_bits: int = config.AHE_MSG_BITS) -> int:
    field = field or default_field()
    return -(-field.bit_len // chunk_bits)


def key_to_chunks(key: PrfKey, field: Optional[PrimeField] = None,
                  chunk_bits: int = config.AHE_MSG_BITS) -> KeyChunks:
    field = field or default_field()
    mask = (1 << chunk_bits) - 1
    value = key.value
    chunks = []
    for _ in range(chunk_count(field, chunk_bits)):
        chunks.append(value & mask)
        value >>= chunk_bits
    return KeyChunks(tuple(chunks), chunk_bits)


def chunks_to_key(chunks: KeyChunks, field: Optional[PrimeField] = None) -> PrfKey:
    """
    Reassemble a key from its chunks.

    Raises:
        ChunkOverflow: a chunk is too wide or the value is not below p
    """
    field = field or default_field()
    value = 0
    for i, c in enumerate(chunks.chunks):
        if not 0 <= c < (1 << chunks.chunk_bits):
            raise ChunkOverflow(f"Chunk {i} = {c} exceeds {chunks.chunk_bits} bits")
        value |= c << (i * chunks.chunk_bits)
    if value >= field.p:
        raise ChunkOverflow("Reassembled key is not a field element")
    return PrfKey(value)
