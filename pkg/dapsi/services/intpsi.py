"""
Integer distance-aware PSI.

Alice replaces each a by the maximal dyadic blocks covering its match
window (the maximal complete subtries of the prefix trie over the window).
Bob replaces each b by its prefix ladder. A block and a ladder entry are
the same wildcard string exactly when b lies in the block, so an exact PSI
over the strings finds every pair with |a - b| < d and nothing else.
"""

import logging
import struct
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from dapsi.exceptions import InvalidThreshold, ProtocolViolation
from dapsi.models.params import IntParams
from dapsi.services.psi_backend import PsiBackend, get_backend
from dapsi.utils.randomness import SeedLike, spawn_rngs
from dapsi.utils.transport import Channel, LocalSession, Tag, Transcript

logger = logging.getLogger(__name__)

WILDCARD_FORMAT = struct.Struct('<BBQ')


@dataclass(frozen=True, order=True)
class WildcardString:
    """
    An L-bit string whose last L - prefix_len bits are wildcards; it stands
    for the 2^(L - prefix_len) integers sharing the prefix.
    """
    prefix_value: int
    prefix_len: int
    total_len: int

    def __post_init__(self):
        if not 0 <= self.prefix_len <= self.total_len:
            raise ValueError(f"prefix_len {self.prefix_len} outside [0, {self.total_len}]")
        if not 0 <= self.prefix_value < (1 << self.prefix_len):
            raise ValueError(f"prefix {self.prefix_value} does not fit in {self.prefix_len} bits")

    @classmethod
    def full(cls, value: int, total_len: int) -> 'WildcardString':
        return cls(value, total_len, total_len)

    @classmethod
    def parse(cls, text: str) -> 'WildcardString':
        """'0011*' style: binary prefix followed by '*' wildcards."""
        prefix = text.rstrip('*')
        if prefix.strip('01'):
            raise ValueError(f"Not a wildcard string: {text!r}")
        return cls(int(prefix, 2) if prefix else 0, len(prefix), len(text))

    @property
    def wildcards(self) -> int:
        return self.total_len - self.prefix_len

    @property
    def low(self) -> int:
        return self.prefix_value << self.wildcards

    @property
    def high(self) -> int:
        return self.low + (1 << self.wildcards) - 1

    def __contains__(self, x: int) -> bool:
        return self.low <= x <= self.high

    def __str__(self) -> str:
        prefix = format(self.prefix_value, f'0{self.prefix_len}b') if self.prefix_len else ''
        return prefix + '*' * self.wildcards


def expand_wildcard(s: WildcardString) -> range:
    """Every integer the string stands for."""
    return range(s.low, s.high + 1)


def wildcard_encode(s: WildcardString) -> bytes:
    """Canonical PSI element: (L, prefix_len, prefix_value)."""
    return WILDCARD_FORMAT.pack(s.total_len, s.prefix_len, s.prefix_value)


def wildcard_decode(data: bytes) -> WildcardString:
    if len(data) != WILDCARD_FORMAT.size:
        raise ValueError(f"Wildcard encoding must be {WILDCARD_FORMAT.size} bytes")
    total_len, prefix_len, prefix_value = WILDCARD_FORMAT.unpack(data)
    return WildcardString(prefix_value, prefix_len, total_len)


def dyadic_cover(lo: int, hi: int, total_len: int) -> List[WildcardString]:
    """
    Greedy cover of [lo, hi] by the largest aligned blocks, in increasing order.

    These blocks are exactly the maximal complete subtries of the prefix
    trie over [lo, hi]. An empty range (lo > hi) gives an empty cover.
    """
    if lo > hi:
        return []
    if lo < 0 or hi >= (1 << total_len):
        raise ValueError(f"[{lo}, {hi}] is outside the {total_len}-bit universe")
    out = []
    while lo <= hi:
        width = (lo & -lo).bit_length() - 1 if lo else total_len
        while lo + (1 << width) - 1 > hi:
            width -= 1
        out.append(WildcardString(lo >> width, total_len - width, total_len))
        lo += 1 << width
    return out


class PrefixTrie:
    """
    Explicit binary trie over the L-bit strings of a contiguous range.

    Nodes are (depth, prefix) pairs mapped to the number of leaves below them.
    """

    def __init__(self, total_len: int, leaves: Iterable[int]):
        self.total_len = total_len
        self.leaves = sorted(set(leaves))
        self.counts: Dict[Tuple[int, int], int] = defaultdict(int)
        for leaf in self.leaves:
            if not 0 <= leaf < (1 << total_len):
                raise ValueError(f"Leaf {leaf} outside the {total_len}-bit universe")
            for depth in range(total_len + 1):
                self.counts[(depth, leaf >> (total_len - depth))] += 1

    @classmethod
    def from_range(cls, lo: int, hi: int, total_len: int) -> 'PrefixTrie':
        return cls(total_len, range(lo, hi + 1))

    def is_complete(self, depth: int, prefix: int) -> bool:
        return self.counts.get((depth, prefix), 0) == 1 << (self.total_len - depth)

    def mec_nodes(self) -> List[WildcardString]:
        """Complete subtries whose parent is not complete, in increasing order."""
        out = []
        for (depth, prefix) in self.counts:
            if not self.is_complete(depth, prefix):
                continue
            if depth > 0 and self.is_complete(depth - 1, prefix >> 1):
                continue
            out.append(WildcardString(prefix, depth, self.total_len))
        return sorted(out, key=lambda s: s.low)


def match_window(a: int, params: IntParams) -> Tuple[int, int]:
    """[a-d+1, a+d-1] (or [a-d, a+d] when inclusive), clamped to the universe."""
    d = params.threshold
    if not params.inclusive and d == 0:
        raise InvalidThreshold("Distance threshold must be at least 1")
    reach = d if params.inclusive else d - 1
    return max(0, a - reach), min((1 << params.max_bit_len) - 1, a + reach)


def _check_value(x: int, params: IntParams) -> None:
    if not 0 <= x < (1 << params.max_bit_len):
        raise ValueError(f"{x} is outside [0, 2^{params.max_bit_len})")


def alice_augment(a: int, params: IntParams) -> List[WildcardString]:
    """The maximal complete subtries of the trie over a's match window."""
    _check_value(a, params)
    lo, hi = match_window(a, params)
    return dyadic_cover(lo, hi, params.max_bit_len)


def bob_augment(b: int, params: IntParams) -> List[WildcardString]:
    """
    Prefix ladder of b with 0 .. floor(log2 w) + 1 wildcards, w being the
    window width (2d - 1, or 2d + 1 when inclusive).
    """
    _check_value(b, params)
    if not params.inclusive and params.threshold == 0:
        raise InvalidThreshold("Distance threshold must be at least 1")
    L = params.max_bit_len
    top = min(L, params.window.bit_length())
    return [WildcardString(b >> w, L - w, L) for w in range(top + 1)]


def count_mec_subtries(lo: int, hi: int, total_len: int) -> int:
    return len(dyadic_cover(lo, hi, total_len))


def naive_augment(a: int, params: IntParams) -> List[WildcardString]:
    """Baseline: every integer of the window as a full string."""
    _check_value(a, params)
    lo, hi = match_window(a, params)
    return [WildcardString.full(x, params.max_bit_len) for x in range(lo, hi + 1)]


def augment_set(values: Iterable[int], params: IntParams, side: str,
                naive: bool = False) -> Dict[bytes, List[int]]:
    """
    Encoded strings of a whole set, deduplicated, with the multimap
    string -> source values.
    """
    if side == 'alice':
        augment = naive_augment if naive else alice_augment
    elif side == 'bob':
        augment = (lambda b, p: [WildcardString.full(b, p.max_bit_len)]) if naive else bob_augment
    else:
        raise ValueError(f"Unknown side {side!r}")
    sources: Dict[bytes, List[int]] = defaultdict(list)
    for x in sorted(set(int(v) for v in values)):
        for s in augment(x, params):
            sources[wildcard_encode(s)].append(x)
    return dict(sources)


# Extra round: Bob names the sources of each matched string, Alice returns the pairs.

def _encode_sources(matched: Sequence[bytes], sources: Dict[bytes, List[int]]) -> bytes:
    parts = [struct.pack('<I', len(matched))]
    for element in matched:
        values = sources[element]
        parts.append(element)
        parts.append(struct.pack(f'<I{len(values)}Q', len(values), *values))
    return b''.join(parts)


def _decode_sources(data: bytes) -> Dict[bytes, List[int]]:
    (count,) = struct.unpack_from('<I', data, 0)
    offset = 4
    out = {}
    for _ in range(count):
        element = data[offset:offset + WILDCARD_FORMAT.size]
        offset += WILDCARD_FORMAT.size
        (k,) = struct.unpack_from('<I', data, offset)
        out[element] = list(struct.unpack_from(f'<{k}Q', data, offset + 4))
        offset += 4 + 8 * k
    return out


def _encode_pairs(pairs: Sequence[Tuple[int, int]]) -> bytes:
    flat = [x for pair in pairs for x in pair]
    return struct.pack(f'<I{len(flat)}Q', len(pairs), *flat)


def _decode_pairs(data: bytes) -> List[Tuple[int, int]]:
    (count,) = struct.unpack_from('<I', data, 0)
    flat = struct.unpack_from(f'<{2 * count}Q', data, 4)
    return [(flat[2 * i], flat[2 * i + 1]) for i in range(count)]


def run_intpsi_alice(channel: Channel, values: Iterable[int], params: IntParams, backend: PsiBackend,
                     rng: np.random.Generator, naive: bool = False) -> List[Tuple[int, int]]:
    sources = augment_set(values, params, 'alice', naive)
    logger.info("Alice: %d wildcard strings", len(sources))
    matched = backend.run_alice(channel, sorted(sources), rng)
    _, payload = channel.expect(Tag.MATCH_SOURCES)
    bob_sources = _decode_sources(payload)
    if set(bob_sources) != matched:
        raise ProtocolViolation("Bob's matched strings differ from the PSI output")
    pairs = sorted({(a, b) for element in matched for a in sources[element] for b in bob_sources[element]})
    channel.send(Tag.MATCH_PAIRS, _encode_pairs(pairs))
    logger.info("Alice: %d matched pair(s)", len(pairs))
    return pairs


def run_intpsi_bob(channel: Channel, values: Iterable[int], params: IntParams, backend: PsiBackend,
                   rng: np.random.Generator, naive: bool = False) -> List[Tuple[int, int]]:
    sources = augment_set(values, params, 'bob', naive)
    logger.info("Bob: %d wildcard strings", len(sources))
    matched = backend.run_bob(channel, sorted(sources), rng)
    channel.send(Tag.MATCH_SOURCES, _encode_sources(sorted(matched), sources))
    _, payload = channel.expect(Tag.MATCH_PAIRS)
    return _decode_pairs(payload)


@dataclass
class IntPsiResult:
    pairs: List[Tuple[int, int]]
    alice_strings: int
    bob_strings: int
    transcripts: Dict[str, Transcript]


def int_psi(alice: Iterable[int], bob: Iterable[int], params: IntParams,
            backend: Union[str, PsiBackend] = 'oracle', seed: SeedLike = None,
            naive: bool = False) -> IntPsiResult:
    """
    All pairs (a, b) with |a - b| < d (or <= d when inclusive), exactly.

    Args:
        alice: Alice's integers
        bob: Bob's integers
        params: Threshold and bit length
        backend: Exact-PSI engine or its name
        seed: Session seed
        naive: Use the full-window baseline augmentation instead

    Returns:
        IntPsiResult with the sorted pairs, augmented sizes and transcripts
    """
    alice, bob = list(alice), list(bob)
    engine = get_backend(backend) if isinstance(backend, str) else backend
    rngs = spawn_rngs(seed, ('alice', 'bob'))
    session = LocalSession(('alice', 'bob'), [('alice', 'bob')])
    results = session.run({
        'alice': lambda: run_intpsi_alice(session.channel('alice', 'bob'), alice, params, engine,
                                          rngs['alice'], naive),
        'bob': lambda: run_intpsi_bob(session.channel('bob', 'alice'), bob, params, engine,
                                      rngs['bob'], naive),
    })
    if results['alice'] != results['bob']:
        raise ProtocolViolation("Parties disagree on the matched pairs")
    return IntPsiResult(
        pairs=results['alice'],
        alice_strings=len(augment_set(alice, params, 'alice', naive)),
        bob_strings=len(augment_set(bob, params, 'bob', naive)),
        transcripts=session.transcripts,
    )


def brute_force_pairs(alice: Iterable[int], bob: Iterable[int], params: IntParams) -> Set[Tuple[int, int]]:
    """Reference answer by direct comparison."""
    reach = params.threshold if params.inclusive else params.threshold - 1
    return {(a, b) for a in set(alice) for b in set(bob) if abs(a - b) <= reach}


def augmented_size(a: int, params: IntParams, naive: bool = False) -> int:
    return len(naive_augment(a, params) if naive else alice_augment(a, params))


def ladder_size(params: IntParams) -> Optional[int]:
    """floor(log2 w) + 2 strings per Bob element, capped by L + 1."""
    if not params.inclusive and params.threshold == 0:
        return None
    return min(params.max_bit_len, params.window.bit_length()) + 1
