"""
Bit-vector helpers shared by the Hamming protocols and the CLI loaders.

Bit vectors are 1-D ``numpy.uint8`` arrays of zeros and ones.
"""

from typing import List, Sequence, Union

import numpy as np

BitLike = Union[str, Sequence[int], np.ndarray]


def as_bits(v: BitLike) -> np.ndarray:
    """Coerce a '0101' string or an int sequence to a uint8 bit array."""
    if isinstance(v, str):
        if v.strip('01'):
            raise ValueError(f"Not a bit string: {v!r}")
        return np.frombuffer(v.encode('ascii'), dtype=np.uint8) - ord('0')
    arr = np.asarray(v, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("Bit vectors hold only 0 and 1")
    return arr


def bits_to_str(v: BitLike) -> str:
    return ''.join('1' if b else '0' for b in as_bits(v))


def hamming_weight(v: BitLike) -> int:
    return int(as_bits(v).sum())


def hamming_distance(a: BitLike, b: BitLike) -> int:
    a, b = as_bits(a), as_bits(b)
    if a.shape != b.shape:
        raise ValueError("Vectors differ in length")
    return int(np.count_nonzero(a != b))


def pack_bits(vectors: Sequence[BitLike]) -> bytes:
    """Row-wise ``numpy.packbits`` of equal-length vectors."""
    if not len(vectors):
        return b''
    return np.packbits(np.vstack([as_bits(v) for v in vectors]), axis=1).tobytes()


def unpack_bits(data: bytes, count: int, length: int) -> List[np.ndarray]:
    row_bytes = (length + 7) // 8
    if len(data) != count * row_bytes:
        raise ValueError("Packed bit block has the wrong size")
    if count == 0:
        return []
    packed = np.frombuffer(data, dtype=np.uint8).reshape(count, row_bytes)
    unpacked = np.unpackbits(packed, axis=1)[:, :length]
    return [row.copy() for row in unpacked]


def random_bits(length: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=length, dtype=np.uint8)


def flip_random(v: BitLike, count: int, rng: np.random.Generator) -> np.ndarray:
    """Copy of ``v`` with ``count`` distinct random positions flipped."""
    out = as_bits(v).copy()
    positions = rng.choice(out.size, size=count, replace=False)
    out[positions] ^= 1
    return out
