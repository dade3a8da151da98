"""
Ideal OLE / VOLE functionalities and the dealer endpoint that serves them
(plus the sub-sampling oracle) over transport channels.

Alice inputs x and learns u*x + v; Bob inputs (u, v) and learns nothing.
"""

import logging
import struct
from typing import List, Sequence, Tuple

from dapsi.exceptions import LengthMismatch, ProtocolViolation
from dapsi.services.crypto import PrfKey, masked_prf_set
from dapsi.utils.bits import BitLike, pack_bits, unpack_bits
from dapsi.utils.field import FieldElement, PrimeField, decode_elements, encode_elements
from dapsi.utils.transport import Channel, Tag

logger = logging.getLogger(__name__)


def ole_ideal(alice_x: int, bob_u: int, bob_v: int, field: PrimeField) -> FieldElement:
    """u*x + v, delivered to Alice only."""
    return (bob_u * alice_x + bob_v) % field.p


def vole_ideal(alice_x: int, bob_u: Sequence[int], bob_v: Sequence[int],
               field: PrimeField) -> List[FieldElement]:
    """Componentwise u*x + v for one Alice input and Bob's vectors."""
    if len(bob_u) != len(bob_v):
        raise LengthMismatch(f"|u| = {len(bob_u)} but |v| = {len(bob_v)}")
    p = field.p
    return [(u * alice_x + v) % p for u, v in zip(bob_u, bob_v)]


class OleDealer:
    """
    In-process ideal dealer for one batch of OLE/VOLE evaluations.

    Bob deposits his inputs first; Alice then collects her outputs.
    """

    def __init__(self, field: PrimeField):
        self.field = field
        self._u: List[List[int]] = []
        self._v: List[List[int]] = []

    def submit_bob(self, us: Sequence[Sequence[int]], vs: Sequence[Sequence[int]]) -> None:
        if len(us) != len(vs):
            raise LengthMismatch("Bob's u and v batches differ in length")
        self._u = [list(u) for u in us]
        self._v = [list(v) for v in vs]

    def serve_alice(self, xs: Sequence[int]) -> List[List[FieldElement]]:
        if len(xs) != len(self._u):
            raise LengthMismatch(f"Alice sent {len(xs)} inputs for {len(self._u)} evaluations")
        out = [vole_ideal(x, u, v, self.field) for x, u, v in zip(xs, self._u, self._v)]
        self._u, self._v = [], []
        return out


# Wire helpers. A batch is m evaluation points; a VOLE batch carries n
# components per point, flattened point-major.

def _encode_matrix(field: PrimeField, rows: Sequence[Sequence[int]]) -> bytes:
    width = len(rows[0]) if rows else 0
    return struct.pack('<I', width) + encode_elements(field, [x for row in rows for x in row])


def _decode_matrix(field: PrimeField, data: bytes, offset: int = 0) -> Tuple[List[List[int]], int]:
    (width,) = struct.unpack_from('<I', data, offset)
    flat, offset = decode_elements(field, data, offset + 4)
    if width == 0:
        return [], offset
    if len(flat) % width:
        raise ProtocolViolation("Matrix payload is not rectangular")
    return [flat[i:i + width] for i in range(0, len(flat), width)], offset


def submit_ole(dealer: Channel, field: PrimeField, us: Sequence[int], vs: Sequence[int]) -> None:
    """Bob's side of a batch of OLE calls (one per evaluation point)."""
    if len(us) != len(vs):
        raise LengthMismatch("u and v differ in length")
    dealer.send(Tag.OLE_UV, encode_elements(field, us) + encode_elements(field, vs))


def request_ole(dealer: Channel, field: PrimeField, xs: Sequence[int]) -> List[FieldElement]:
    """Alice's side of a batch of OLE calls."""
    dealer.send(Tag.OLE_X, encode_elements(field, xs))
    _, payload = dealer.expect(Tag.OLE_Z)
    z, _ = decode_elements(field, payload)
    return z


def submit_vole(dealer: Channel, field: PrimeField, us: Sequence[Sequence[int]],
                vs: Sequence[Sequence[int]]) -> None:
    """Bob's side of m VOLE calls; ``us[k]`` is the length-n vector for point k."""
    if len(us) != len(vs) or any(len(u) != len(v) for u, v in zip(us, vs)):
        raise LengthMismatch("u and v batches differ in shape")
    dealer.send(Tag.VOLE_UV, _encode_matrix(field, us) + _encode_matrix(field, vs))


def request_vole(dealer: Channel, field: PrimeField, xs: Sequence[int]) -> List[List[FieldElement]]:
    dealer.send(Tag.VOLE_X, encode_elements(field, xs))
    _, payload = dealer.expect(Tag.VOLE_Z)
    z, _ = _decode_matrix(field, payload)
    return z


def submit_subsample(dealer: Channel, key: PrfKey, masks: Sequence[BitLike]) -> None:
    """Bob hands the sub-sampling key and masks to the oracle."""
    length = len(masks[0]) if len(masks) else 0
    dealer.send(Tag.SUBSAMPLE_KEY,
                key.to_bytes() + struct.pack('<II', len(masks), length) + pack_bits(masks))


def request_subsample(dealer: Channel, field: PrimeField,
                      vectors: Sequence[BitLike]) -> List[List[FieldElement]]:
    """Alice obtains the sub-sampled set of each of her vectors."""
    length = len(vectors[0]) if len(vectors) else 0
    dealer.send(Tag.SUBSAMPLE_VEC, struct.pack('<II', len(vectors), length) + pack_bits(vectors))
    _, payload = dealer.expect(Tag.SUBSAMPLE_SET)
    sets, _ = _decode_matrix(field, payload)
    return sets


def _serve_subsample(alice: Channel, bob_payload: bytes, field: PrimeField) -> None:
    key = PrfKey(int.from_bytes(bob_payload[:16], 'little'))
    count, length = struct.unpack_from('<II', bob_payload, 16)
    masks = unpack_bits(bob_payload[24:], count, length)
    _, payload = alice.expect(Tag.SUBSAMPLE_VEC)
    n, vec_len = struct.unpack_from('<II', payload, 0)
    if n and vec_len != length:
        raise ProtocolViolation("Vector length differs from mask length")
    vectors = unpack_bits(payload[8:], n, vec_len)
    sets = [masked_prf_set(key, masks, v, field) for v in vectors]
    alice.send(Tag.SUBSAMPLE_SET, _encode_matrix(field, sets))


def run_dealer(alice: Channel, bob: Channel, field: PrimeField) -> int:
    """
    Serve OLE, VOLE and sub-sampling requests until both parties say DONE.

    Each request starts with Bob's deposit, followed by Alice's query.

    Returns:
        Number of batches served
    """
    served = 0
    while True:
        tag, payload = bob.recv()
        if tag == Tag.DONE:
            break
        if tag == Tag.OLE_UV:
            us, offset = decode_elements(field, payload)
            vs, _ = decode_elements(field, payload, offset)
            _, xpayload = alice.expect(Tag.OLE_X)
            xs, _ = decode_elements(field, xpayload)
            if not len(xs) == len(us) == len(vs):
                raise LengthMismatch("OLE batch sizes disagree")
            alice.send(Tag.OLE_Z, encode_elements(
                field, [ole_ideal(x, u, v, field) for x, u, v in zip(xs, us, vs)]))
        elif tag == Tag.VOLE_UV:
            us, offset = _decode_matrix(field, payload)
            vs, _ = _decode_matrix(field, payload, offset)
            _, xpayload = alice.expect(Tag.VOLE_X)
            xs, _ = decode_elements(field, xpayload)
            dealer = OleDealer(field)
            dealer.submit_bob(us, vs)
            alice.send(Tag.VOLE_Z, _encode_matrix(field, dealer.serve_alice(xs)))
        elif tag == Tag.SUBSAMPLE_KEY:
            _serve_subsample(alice, payload, field)
        else:
            raise ProtocolViolation(f"Dealer cannot handle {tag.name} from Bob")
        served += 1
    alice.expect(Tag.DONE)
    logger.info("Dealer served %d batches", served)
    return served
