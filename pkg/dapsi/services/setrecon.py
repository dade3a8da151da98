"""
One-sided set reconciliation over F_p.

Bob evaluates W = R1*P + R2*Q at shared abscissas through OLE (Alice holds
P's values, Bob holds random R1, R2 and Q). Alice divides by P, fits a
rational function with a bounded denominator, and reads S_a \\ S_b off the
denominator's roots. Variants: plain, blinded by a PRF key, and the
exponential-search variant that handles differences up to d with only
l+d+2 points.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from dapsi import config
from dapsi.exceptions import (
    ComputeCapExceeded,
    EnumerationTooLarge,
    ForeignElement,
    Inconsistent,
    SingularAbscissa,
)
from dapsi.models.params import ReconParams
from dapsi.services.crypto import PrfKey, prf_field
from dapsi.services.ole import ole_ideal
from dapsi.utils.bits import BitLike, as_bits
from dapsi.utils.field import (
    FieldElement,
    Polynomial,
    PrimeField,
    default_field,
    eval_from_roots,
    poly_divrem,
    poly_eval,
    poly_from_roots,
)
from dapsi.utils.interp import (
    EvalPointSet,
    barycentric_weights,
    leibniz_degree_probe,
    precompute_inverse_diff_tables,
    random_poly_evaluations,
    solve_denominator,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MappedSet:
    """A vector encoded as distinct field elements (the roots of P or Q)."""
    elems: FrozenSet[FieldElement]
    size: int

    def __post_init__(self):
        if len(self.elems) != self.size:
            raise ValueError(f"MappedSet of size {self.size} holds {len(self.elems)} elements")

    @classmethod
    def of(cls, elems: Iterable[int]) -> 'MappedSet':
        elems = list(elems)
        frozen = frozenset(elems)
        if len(frozen) != len(elems):
            raise ValueError("Mapped elements must be distinct")
        return cls(frozen, len(frozen))

    def ordered(self) -> List[FieldElement]:
        return sorted(self.elems)


@dataclass(frozen=True)
class ReconTranscript:
    """What Alice sees: W(x_k) (possibly blinded) at every abscissa."""
    alice_evals: Tuple[FieldElement, ...]
    point_count: int
    blinded: bool

    def __post_init__(self):
        if len(self.alice_evals) != self.point_count:
            raise ValueError("Transcript length does not match its point count")


@dataclass(frozen=True)
class AttackResult:
    """Outcome of the enumeration attack on an unblinded transcript."""
    recovered: Optional[MappedSet]
    diff_size: Optional[int]
    consistent_count: int

    @property
    def ambiguous(self) -> bool:
        return self.recovered is None


def map_bitvector(a: BitLike) -> MappedSet:
    """Position m (1-based) with bit b maps to the element 2m + b."""
    bits = as_bits(a)
    if bits.size < 1:
        raise ValueError("Cannot map an empty vector")
    return MappedSet.of(2 * (m + 1) + int(bit) for m, bit in enumerate(bits))


def recover_bitvector(a: BitLike, diff: Iterable[int]) -> np.ndarray:
    """
    Rebuild Bob's vector from Alice's vector and S_a \\ S_b.

    Args:
        a: Alice's bit vector
        diff: Elements of Alice's mapped set that Bob lacks

    Returns:
        Bob's bit vector
    """
    bits = as_bits(a)
    out = bits.copy()
    for e in diff:
        position, bit = divmod(int(e), 2)
        index = position - 1
        if not 0 <= index < bits.size or bits[index] != bit:
            raise ForeignElement(f"{e} is not in Alice's mapped set")
        out[index] ^= 1
    return out


class ReconBob:
    """Bob's side: random R1, R2 and his set polynomial Q."""

    def __init__(self, bob: MappedSet, params: ReconParams):
        self.bob = bob
        self.params = params
        self.q_evals = eval_from_roots(params.field, bob.ordered(), params.eval_points)

    def ole_inputs(self, rng: np.random.Generator,
                   blind_key: Optional[PrfKey] = None) -> Tuple[List[FieldElement], List[FieldElement]]:
        """
        Bob's (u_k, v_k) = (R1(x_k), R2(x_k) Q(x_k) [+ phi(key, k)]).

        Returns:
            Tuple of (u vector, v vector) over all abscissas
        """
        field = self.params.field
        p = field.p
        xs = self.params.eval_points
        ell = self.params.set_size
        us = random_poly_evaluations(field, ell, xs, rng)
        r2 = random_poly_evaluations(field, ell, xs, rng)
        vs = [a * b % p for a, b in zip(r2, self.q_evals)]
        if blind_key is not None:
            vs = [(v + prf_field(blind_key, k + 1, field)) % p for k, v in enumerate(vs)]
        return us, vs


class ReconAlice:
    """Alice's side: her set polynomial P and the reconciliation step."""

    def __init__(self, alice: MappedSet, params: ReconParams):
        self.alice = alice
        self.params = params
        field = params.field
        self.poly = poly_from_roots(field, alice.ordered())
        self.p_evals = eval_from_roots(field, alice.ordered(), params.eval_points)
        try:
            self._p_inv = field.batch_inverse(self.p_evals)
        except ZeroDivisionError:
            raise SingularAbscissa("An evaluation point is one of Alice's elements") from None

    def ole_inputs(self) -> List[FieldElement]:
        return list(self.p_evals)

    def quotients(self, z: Sequence[int], blind_key: Optional[PrfKey] = None) -> List[FieldElement]:
        """y_k = (z_k - phi(key, k)) / P(x_k)."""
        field = self.params.field
        p = field.p
        if len(z) != self.params.point_count:
            raise ValueError(f"Expected {self.params.point_count} evaluations, got {len(z)}")
        if blind_key is not None:
            z = [(zk - prf_field(blind_key, k + 1, field)) % p for k, zk in enumerate(z)]
        return [zk * inv % p for zk, inv in zip(z, self._p_inv)]

    def reconcile(self, z: Sequence[int], blind_key: Optional[PrfKey] = None,
                  budget: Optional[Tuple[int, int]] = None) -> Optional[FrozenSet[FieldElement]]:
        """
        Recover S_a \\ S_b from Bob's OLE outputs, or None past the threshold.

        Args:
            z: W(x_k) values, blinded if ``blind_key`` is given
            blind_key: Candidate unblinding key
            budget: (numerator, denominator) degree budget; default (l+d, d)

        Returns:
            The difference set, or None
        """
        ell, d = self.params.set_size, self.params.threshold
        deg_num, deg_den = budget if budget is not None else (ell + d, d)
        pts = EvalPointSet(self.params.field, self.params.eval_points, tuple(self.quotients(z, blind_key)))
        try:
            den = solve_denominator(pts, deg_num, deg_den)
        except Inconsistent:
            return None
        return self.factor_diff(den)

    def factor_diff(self, den: Polynomial) -> Optional[FrozenSet[FieldElement]]:
        """Roots of Den when Den divides P, else None."""
        if den.degree == 0:
            return frozenset()
        _, rem = poly_divrem(self.poly, den)
        if not rem.is_zero():
            return None
        roots = frozenset(s for s in self.alice.elems if poly_eval(den, s) == 0)
        if len(roots) != den.degree:
            return None
        return roots


def _run_ole(alice: ReconAlice, bob: ReconBob, rng: np.random.Generator,
             blind_key: Optional[PrfKey] = None) -> List[FieldElement]:
    field = alice.params.field
    us, vs = bob.ole_inputs(rng, blind_key)
    return [ole_ideal(x, u, v, field) for x, u, v in zip(alice.ole_inputs(), us, vs)]


def _check_sizes(alice: MappedSet, bob: MappedSet, params: ReconParams) -> None:
    if not alice.size == bob.size == params.set_size:
        raise ValueError(f"Both sets must have size {params.set_size}")


def one_sided_set_recon(alice: MappedSet, bob: MappedSet, params: ReconParams,
                        rng: np.random.Generator,
                        blind_key: Optional[PrfKey] = None) -> Optional[FrozenSet[FieldElement]]:
    """
    Alice learns S_a \\ S_b if it has at most d elements, else None.

    With ``blind_key`` Bob blinds every evaluation and Alice unblinds with
    the same key.
    """
    _check_sizes(alice, bob, params)
    if params.variant != 'plain':
        raise ValueError("one_sided_set_recon needs plain parameters")
    a = ReconAlice(alice, params)
    z = _run_ole(a, ReconBob(bob, params), rng, blind_key)
    return a.reconcile(z, blind_key)


def observe_recon(alice: MappedSet, bob: MappedSet, params: ReconParams,
                  rng: np.random.Generator) -> ReconTranscript:
    """Run the plain OLE phase and return Alice's view."""
    _check_sizes(alice, bob, params)
    z = _run_ole(ReconAlice(alice, params), ReconBob(bob, params), rng)
    return ReconTranscript(tuple(z), len(z), blinded=False)


def t_ham_query_lite(a: BitLike, b: BitLike, threshold: int, rng: np.random.Generator,
                     field: Optional[PrimeField] = None) -> Optional[np.ndarray]:
    """
    Map both vectors, reconcile, and rebuild Bob's vector on success.

    Returns:
        Bob's vector when HD(a, b) <= threshold, else None
    """
    field = field or default_field()
    sa, sb = map_bitvector(a), map_bitvector(b)
    params = ReconParams.plain(sa.size, threshold, field)
    diff = one_sided_set_recon(sa, sb, params, rng)
    if diff is None:
        return None
    return recover_bitvector(a, diff)


def exp_search_space(set_size: int, threshold: int) -> int:
    """Number of phase-two candidates: sum of C(l, t) for d/2 < t <= d."""
    return sum(comb(set_size, t) for t in range(threshold // 2 + 1, threshold + 1))


class CandidateProbe:
    """
    Inverse divided-difference tables for a family of candidate divisors of W.

    A candidate is accepted when W / D_C, sampled on the shared abscissas,
    has a vanishing divided difference at every requested order. The tables
    depend only on Alice's set, so one probe serves every OLE output.
    """

    def __init__(self, params: ReconParams, candidates: Sequence[FrozenSet[FieldElement]],
                 divisors: Sequence[Polynomial], orders: Iterable[int]):
        self.params = params
        self.candidates = list(candidates)
        self.orders = tuple(orders)
        self.tables = precompute_inverse_diff_tables(divisors, params.eval_points)

    def __len__(self) -> int:
        return len(self.candidates)

    def accepted(self, z: Sequence[int]) -> Iterator[FrozenSet[FieldElement]]:
        u_pts = EvalPointSet(self.params.field, self.params.eval_points, tuple(int(v) for v in z))
        for candidate, table in zip(self.candidates, self.tables):
            if all(leibniz_degree_probe(u_pts, table, order=j) == 0 for j in self.orders):
                yield candidate


def difference_probe(alice: MappedSet, params: ReconParams, size: int) -> CandidateProbe:
    """
    Candidates C for S_a \\ S_b with |C| = size, divisor G_C = prod over S_a \\ C.

    W / G_C has degree <= l + size, so f[x_1..x_J] must vanish for every J
    from l+size+2 to m.
    """
    elems = alice.ordered()
    candidates = [frozenset(c) for c in combinations(elems, size)]
    divisors = [poly_from_roots(params.field, [e for e in elems if e not in c]) for c in candidates]
    orders = range(params.set_size + size + 2, params.point_count + 1)
    return CandidateProbe(params, candidates, divisors, orders)


def intersection_probe(alice: MappedSet, params: ReconParams, size: int) -> CandidateProbe:
    """
    Candidates C inside S_a and S_b with |C| = size, divisor poly(C).

    W / poly(C) has degree <= 2l - size, which the top divided differences test.
    """
    elems = alice.ordered()
    candidates = [frozenset(c) for c in combinations(elems, size)]
    divisors = [poly_from_roots(params.field, c) for c in candidates]
    orders = range(2 * params.set_size - size + 2, params.point_count + 1)
    return CandidateProbe(params, candidates, divisors, orders)


def iter_exp_candidates(alice: ReconAlice, z: Sequence[int],
                        sizes: Iterable[int]) -> Iterator[FrozenSet[FieldElement]]:
    """Yield every difference candidate, smallest size first, that passes all surplus degree checks."""
    for t in sizes:
        probe = difference_probe(alice.alice, alice.params, t)
        logger.debug("Checking %d candidates of size %d", len(probe), t)
        yield from probe.accepted(z)


def one_sided_set_recon_exp(alice: MappedSet, bob: MappedSet, params: ReconParams,
                            rng: np.random.Generator,
                            compute_cap: int = config.EXP_COMPUTE_CAP) -> Optional[FrozenSet[FieldElement]]:
    """
    Reconciliation with l+d+2 points: a rational fit handles differences up
    to d/2, and an exhaustive candidate search covers (d/2, d].

    Raises:
        ComputeCapExceeded: the phase-two search space is above ``compute_cap``
    """
    _check_sizes(alice, bob, params)
    if params.variant != 'exp':
        raise ValueError("one_sided_set_recon_exp needs exp parameters")
    ell, d = params.set_size, params.threshold
    space = exp_search_space(ell, d)
    if space > compute_cap:
        raise ComputeCapExceeded(f"{space} candidates exceed the cap of {compute_cap}")

    a = ReconAlice(alice, params)
    z = _run_ole(a, ReconBob(bob, params), rng)
    half = d // 2
    diff = a.reconcile(z, budget=(ell + half, half))
    if diff is not None:
        return diff
    for candidate in iter_exp_candidates(a, z, range(half + 1, d + 1)):
        return candidate
    return None


def _bob_set_from_candidate(alice: MappedSet, candidate: Iterable[int]) -> MappedSet:
    flipped = set(candidate)
    return MappedSet.of([e ^ 1 if e in flipped else e for e in alice.ordered()])


def prop2_attack(transcript: ReconTranscript, alice: MappedSet, params: ReconParams,
                 max_len: int = config.ATTACK_MAX_LEN) -> AttackResult:
    """
    Try every bit vector Bob might hold, smallest difference first, and keep
    those whose implied denominator makes W/P a rational function within the
    numerator budget l + |diff|.

    A difference of size s leaves 2d - s surplus constraints, so sizes below
    2d single out Bob's vector; from size 2d on every candidate fits.

    Args:
        transcript: Unblinded plain-reconciliation view
        alice: Alice's bit-mapped set
        params: The reconciliation parameters used
        max_len: Largest vector length allowed for enumeration

    Returns:
        AttackResult; ``ambiguous`` when several candidates fit
    """
    ell, d = alice.size, params.threshold
    if ell > max_len:
        raise EnumerationTooLarge(f"Vector length {ell} exceeds the enumeration cap {max_len}")
    if transcript.blinded:
        raise ValueError("The attack needs an unblinded transcript")
    field = params.field
    p = field.p
    xs = params.eval_points
    m = len(xs)
    a = ReconAlice(alice, params)
    weights = barycentric_weights(field, xs)
    wy = [w * y % p for w, y in zip(weights, a.quotients(transcript.alice_evals))]
    elems = alice.ordered()

    for size in range(0, min(2 * d, ell) + 1):
        n_constraints = m - (ell + size) - 1
        consistent = []
        for candidate in combinations(elems, size):
            if n_constraints > 0:
                den_vals = eval_from_roots(field, candidate, xs)
                terms = [t * dv % p for t, dv in zip(wy, den_vals)]
                if not _moments_vanish(terms, xs, n_constraints, p):
                    continue
            consistent.append(candidate)
        if consistent:
            logger.info("Attack: %d consistent candidate(s) at difference size %d", len(consistent), size)
            if len(consistent) == 1:
                return AttackResult(_bob_set_from_candidate(alice, consistent[0]), size, 1)
            return AttackResult(None, size, len(consistent))
    return AttackResult(None, None, 0)


def _moments_vanish(terms: Sequence[int], xs: Sequence[int], count: int, p: int) -> bool:
    """sum_k terms_k * x_k^j == 0 for all j < count."""
    powered = list(terms)
    for _ in range(count):
        if sum(powered) % p:
            return False
        powered = [t * x % p for t, x in zip(powered, xs)]
    return True
