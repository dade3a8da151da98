"""
Prime-field arithmetic and dense polynomial algebra over F_p.

Field elements are plain Python ints kept in canonical form ``0 <= v < p``;
a :class:`PrimeField` carries the modulus and does the arithmetic. Polynomials
are immutable values with coefficients stored lowest degree first.
"""

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Sequence, Tuple, Union

import gmpy2
import numpy as np

from dapsi import config
from dapsi.exceptions import DuplicateRoot, UndefinedOperation

FieldElement = int


class PrimeField:
    """Arithmetic modulo a prime p."""

    def __init__(self, p: int, check_prime: bool = True):
        p = int(p)
        if p < 2:
            raise ValueError(f"Field modulus must be >= 2, got {p}")
        if check_prime and not gmpy2.is_prime(p):
            raise ValueError(f"Field modulus {p} is not prime")
        self.p = p
        self.bit_len = p.bit_length()
        self._byte_len = (self.bit_len + 7) // 8
        self._mask = (1 << self.bit_len) - 1

    def __eq__(self, other) -> bool:
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self) -> int:
        return hash(('PrimeField', self.p))

    def __repr__(self) -> str:
        return f"PrimeField(p={self.p})"

    def element(self, value: int) -> FieldElement:
        return int(value) % self.p

    def add(self, a: int, b: int) -> FieldElement:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> FieldElement:
        return (a - b) % self.p

    def mul(self, a: int, b: int) -> FieldElement:
        return (a * b) % self.p

    def neg(self, a: int) -> FieldElement:
        return (-a) % self.p

    def inv(self, a: int) -> FieldElement:
        a %= self.p
        if a == 0:
            raise ZeroDivisionError("0 has no inverse in F_p")
        return int(gmpy2.invert(a, self.p))

    def div(self, a: int, b: int) -> FieldElement:
        return (a * self.inv(b)) % self.p

    def batch_inverse(self, values: Sequence[int]) -> List[FieldElement]:
        """
        Invert many elements with a single field inversion.

        Args:
            values: Nonzero field elements

        Returns:
            List of inverses in the same order
        """
        p = self.p
        prefix = []
        acc = 1
        for v in values:
            if v % p == 0:
                raise ZeroDivisionError("0 has no inverse in F_p")
            prefix.append(acc)
            acc = acc * v % p
        inv_acc = int(gmpy2.invert(acc, p)) if values else 1
        out = [0] * len(values)
        for k in range(len(values) - 1, -1, -1):
            out[k] = inv_acc * prefix[k] % p
            inv_acc = inv_acc * values[k] % p
        return out

    def random_element(self, rng: np.random.Generator) -> FieldElement:
        """Uniform element of F_p by rejection sampling on ``rng.bytes``."""
        while True:
            value = int.from_bytes(rng.bytes(self._byte_len), 'little') & self._mask
            if value < self.p:
                return value

    def random_nonzero(self, rng: np.random.Generator) -> FieldElement:
        while True:
            value = self.random_element(rng)
            if value:
                return value

    def random_vector(self, count: int, rng: np.random.Generator) -> List[FieldElement]:
        return [self.random_element(rng) for _ in range(count)]

    def is_canonical(self, value: int) -> bool:
        return isinstance(value, int) and 0 <= value < self.p


@lru_cache(maxsize=None)
def get_field(p: int) -> PrimeField:
    """Shared field instance for modulus p."""
    return PrimeField(p)


def default_field() -> PrimeField:
    return get_field(config.FIELD_MODULUS)


@dataclass(frozen=True)
class Polynomial:
    """Dense polynomial over a prime field, lowest-degree coefficient first."""
    field: PrimeField
    coeffs: Tuple[FieldElement, ...] = ()

    def __post_init__(self):
        p = self.field.p
        coeffs = [int(c) % p for c in self.coeffs]
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        object.__setattr__(self, 'coeffs', tuple(coeffs))

    @classmethod
    def constant(cls, field: PrimeField, value: int) -> 'Polynomial':
        return cls(field, (value,))

    @classmethod
    def identity(cls, field: PrimeField) -> 'Polynomial':
        """The polynomial x."""
        return cls(field, (0, 1))

    @property
    def degree(self) -> int:
        """Degree, with -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def leading(self) -> FieldElement:
        return self.coeffs[-1] if self.coeffs else 0

    def monic(self) -> 'Polynomial':
        if self.is_zero():
            raise UndefinedOperation("Zero polynomial has no monic form")
        inv_lead = self.field.inv(self.leading)
        return self.scale(inv_lead)

    def scale(self, s: int) -> 'Polynomial':
        p = self.field.p
        return Polynomial(self.field, tuple(c * s % p for c in self.coeffs))

    def __call__(self, x: int) -> FieldElement:
        return poly_eval(self, x)

    def _coerce(self, other: Union['Polynomial', int]) -> 'Polynomial':
        if isinstance(other, Polynomial):
            if other.field != self.field:
                raise ValueError("Polynomials over different fields")
            return other
        return Polynomial.constant(self.field, other)

    def __add__(self, other):
        other = self._coerce(other)
        p = self.field.p
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] = (out[i] + c) % p
        return Polynomial(self.field, tuple(out))

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return self.scale(int(other))
        other = self._coerce(other)
        if self.is_zero() or other.is_zero():
            return Polynomial(self.field)
        p = self.field.p
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
        return Polynomial(self.field, tuple(c % p for c in out))

    __rmul__ = __mul__

    def __floordiv__(self, other: 'Polynomial') -> 'Polynomial':
        return poly_divrem(self, other)[0]

    def __mod__(self, other: 'Polynomial') -> 'Polynomial':
        return poly_divrem(self, other)[1]

    def __repr__(self) -> str:
        if self.is_zero():
            return f"Polynomial(0 mod {self.field.p})"
        terms = []
        for i, c in enumerate(self.coeffs):
            if c:
                terms.append(f"{c}" if i == 0 else (f"{c}x^{i}" if c != 1 else f"x^{i}"))
        return f"Polynomial({' + '.join(terms)} mod {self.field.p})"


def poly_from_roots(field: PrimeField, roots: Iterable[int]) -> Polynomial:
    """
    Build the monic polynomial with the given distinct roots.

    Args:
        field: Coefficient field
        roots: Distinct field elements

    Returns:
        prod(x - r) over all roots; the constant 1 for no roots
    """
    p = field.p
    roots = [int(r) % p for r in roots]
    if len(set(roots)) != len(roots):
        raise DuplicateRoot("poly_from_roots requires distinct roots")
    coeffs = [1]
    for r in roots:
        coeffs.append(0)
        for i in range(len(coeffs) - 1, 0, -1):
            coeffs[i] = (coeffs[i - 1] - r * coeffs[i]) % p
        coeffs[0] = (-r * coeffs[0]) % p
    return Polynomial(field, tuple(coeffs))


def poly_eval(poly: Polynomial, x: int) -> FieldElement:
    """Horner evaluation."""
    p = poly.field.p
    acc = 0
    for c in reversed(poly.coeffs):
        acc = (acc * x + c) % p
    return acc


def poly_eval_many(poly: Polynomial, xs: Sequence[int]) -> List[FieldElement]:
    return [poly_eval(poly, x) for x in xs]


def eval_from_roots(field: PrimeField, roots: Iterable[int], xs: Sequence[int]) -> List[FieldElement]:
    """Evaluate prod(x - r) at every x without expanding the product."""
    p = field.p
    roots = list(roots)
    out = []
    for x in xs:
        acc = 1
        for r in roots:
            acc = acc * (x - r) % p
        out.append(acc)
    return out


def poly_divrem(num: Polynomial, den: Polynomial) -> Tuple[Polynomial, Polynomial]:
    """
    Long division ``num = q * den + r`` with ``deg r < deg den``.

    Args:
        num: Dividend
        den: Nonzero divisor

    Returns:
        Tuple of (quotient, remainder)
    """
    if den.is_zero():
        raise UndefinedOperation("Division by the zero polynomial")
    if num.field != den.field:
        raise ValueError("Polynomials over different fields")
    field = num.field
    p = field.p
    dd = den.degree
    if num.degree < dd:
        return Polynomial(field), num
    rem = list(num.coeffs)
    dcoeffs = den.coeffs
    inv_lead = field.inv(den.leading)
    quot = [0] * (num.degree - dd + 1)
    for k in range(len(quot) - 1, -1, -1):
        c = rem[k + dd] * inv_lead % p
        quot[k] = c
        if c:
            for i in range(dd + 1):
                rem[k + i] = (rem[k + i] - c * dcoeffs[i]) % p
    return Polynomial(field, tuple(quot)), Polynomial(field, tuple(rem[:dd]))


def poly_gcd(a: Polynomial, b: Polynomial) -> Polynomial:
    """Monic greatest common divisor by the Euclidean algorithm."""
    if a.is_zero() and b.is_zero():
        raise UndefinedOperation("gcd(0, 0) is undefined")
    while not b.is_zero():
        a, b = b, poly_divrem(a, b)[1]
    return a.monic()


def random_poly(field: PrimeField, degree: int, rng: np.random.Generator) -> Polynomial:
    """Uniformly random polynomial of degree at most ``degree``."""
    return Polynomial(field, tuple(field.random_vector(degree + 1, rng)))


# Wire codecs: 16-byte little-endian elements, u32 length prefixes.

def encode_element(field: PrimeField, value: int) -> bytes:
    if field.bit_len > 8 * config.ELEMENT_BYTES:
        raise ValueError(f"Modulus wider than {config.ELEMENT_BYTES} bytes")
    if not 0 <= value < field.p:
        raise ValueError("Element not in canonical form")
    return int(value).to_bytes(config.ELEMENT_BYTES, 'little')


def decode_element(field: PrimeField, data: bytes, offset: int = 0) -> FieldElement:
    chunk = data[offset:offset + config.ELEMENT_BYTES]
    if len(chunk) != config.ELEMENT_BYTES:
        raise ValueError("Truncated field element")
    value = int.from_bytes(chunk, 'little')
    if value >= field.p:
        raise ValueError("Field element not canonical")
    return value


def encode_elements(field: PrimeField, values: Sequence[int]) -> bytes:
    return struct.pack('<I', len(values)) + b''.join(encode_element(field, v) for v in values)


def decode_elements(field: PrimeField, data: bytes, offset: int = 0) -> Tuple[List[FieldElement], int]:
    """
    Decode a length-prefixed element vector.

    Returns:
        Tuple of (elements, offset just past the vector)
    """
    (count,) = struct.unpack_from('<I', data, offset)
    offset += 4
    values = []
    for _ in range(count):
        values.append(decode_element(field, data, offset))
        offset += config.ELEMENT_BYTES
    return values, offset


def encode_poly(poly: Polynomial) -> bytes:
    return encode_elements(poly.field, poly.coeffs)


def decode_poly(field: PrimeField, data: bytes, offset: int = 0) -> Tuple[Polynomial, int]:
    coeffs, offset = decode_elements(field, data, offset)
    return Polynomial(field, tuple(coeffs)), offset
