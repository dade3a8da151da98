"""
Input loaders: IPv4 blocklists, integer sets and bit-vector files.
"""

import logging
import re
import struct
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

from dapsi.exceptions import InputFormatError
from dapsi.utils.bits import as_bits

logger = logging.getLogger(__name__)

INT_SET_MAGIC = b'DAPSIINT'
_DOTTED_QUAD = re.compile(r'^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$')
_INTEGER = re.compile(r'^\d+$')

PathLike = Union[str, Path]


def parse_ipv4(text: str) -> int:
    """'10.0.0.1' -> 167772161."""
    match = _DOTTED_QUAD.match(text.strip())
    if not match:
        raise ValueError(f"Not a dotted-quad address: {text!r}")
    value = 0
    for octet in match.groups():
        n = int(octet)
        if n > 255:
            raise ValueError(f"Octet {n} out of range in {text!r}")
        value = value * 256 + n
    return value


def format_ipv4(value: int) -> str:
    return '.'.join(str((value >> shift) & 0xFF) for shift in (24, 16, 8, 0))


def _content_lines(path: Path) -> Iterable[tuple]:
    with open(path, 'r', encoding='utf-8') as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if line:
                yield number, line


def parse_ip_list(path: PathLike) -> List[int]:
    """
    Read one dotted quad per line (blank lines and # comments skipped).

    Returns:
        Sorted, deduplicated 32-bit integers

    Raises:
        InputFormatError: a line is not a valid address
    """
    values = set()
    for number, line in _content_lines(Path(path)):
        try:
            values.add(parse_ipv4(line))
        except ValueError as e:
            raise InputFormatError(str(e), number) from None
    logger.info("Parsed %d distinct addresses from %s", len(values), path)
    return sorted(values)


def write_int_set(path: PathLike, values: Iterable[int]) -> int:
    """Binary integer-set file: magic, u32 count, u64 little-endian values."""
    ordered = sorted(set(int(v) for v in values))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(INT_SET_MAGIC + struct.pack(f'<I{len(ordered)}Q', len(ordered), *ordered))
    return len(ordered)


def read_int_set(path: PathLike) -> List[int]:
    data = Path(path).read_bytes()
    if not data.startswith(INT_SET_MAGIC):
        raise InputFormatError(f"{path} is not an integer-set file")
    offset = len(INT_SET_MAGIC)
    (count,) = struct.unpack_from('<I', data, offset)
    if len(data) != offset + 4 + 8 * count:
        raise InputFormatError(f"{path} is truncated")
    return list(struct.unpack_from(f'<{count}Q', data, offset + 4))


def load_int_set(path: PathLike) -> List[int]:
    """Integers from a binary set file, or text lines of integers or dotted quads."""
    path = Path(path)
    with open(path, 'rb') as f:
        head = f.read(len(INT_SET_MAGIC))
    if head == INT_SET_MAGIC:
        return read_int_set(path)
    values = []
    for number, line in _content_lines(path):
        if _INTEGER.match(line):
            values.append(int(line))
        elif _DOTTED_QUAD.match(line):
            try:
                values.append(parse_ipv4(line))
            except ValueError as e:
                raise InputFormatError(str(e), number) from None
        else:
            raise InputFormatError(f"Expected an integer or IPv4 address, got {line!r}", number)
    return values


def load_bit_vectors(path: PathLike) -> List[np.ndarray]:
    """One 0/1 string per line; every vector must have the same length."""
    vectors = []
    for number, line in _content_lines(Path(path)):
        try:
            bits = as_bits(line)
        except ValueError as e:
            raise InputFormatError(str(e), number) from None
        if vectors and bits.size != vectors[0].size:
            raise InputFormatError(f"Vector of length {bits.size}, expected {vectors[0].size}", number)
        vectors.append(bits)
    return vectors
