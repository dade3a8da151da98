"""
Interpolation over F_p: Newton/Lagrange polynomial interpolation, Cauchy
rational interpolation, and divided-difference tables for the Leibniz
degree probe.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, List, Optional, Sequence, Tuple

import gmpy2
import numpy as np

from dapsi.exceptions import (
    AbscissaMismatch,
    DuplicateAbscissa,
    Inconsistent,
    LengthMismatch,
    SingularAbscissa,
)
from dapsi.utils.field import (
    FieldElement,
    Polynomial,
    PrimeField,
    poly_divrem,
    poly_eval_many,
    poly_gcd,
)

# Gap-inverse tables are cached only for point sets up to this size.
_GAP_CACHE_LIMIT = 256


@dataclass(frozen=True)
class EvalPointSet:
    """Points (x_k, y_k) with pairwise distinct abscissas."""
    field: PrimeField
    xs: Tuple[FieldElement, ...]
    ys: Tuple[FieldElement, ...]

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise LengthMismatch(f"{len(self.xs)} abscissas but {len(self.ys)} values")
        p = self.field.p
        xs = tuple(int(x) % p for x in self.xs)
        if len(set(xs)) != len(xs):
            raise DuplicateAbscissa("Evaluation points must have distinct x")
        object.__setattr__(self, 'xs', xs)
        object.__setattr__(self, 'ys', tuple(int(y) % p for y in self.ys))

    @classmethod
    def from_pairs(cls, field: PrimeField, pairs: Sequence[Tuple[int, int]]) -> 'EvalPointSet':
        return cls(field, tuple(x for x, _ in pairs), tuple(y for _, y in pairs))

    def __len__(self) -> int:
        return len(self.xs)

    @property
    def points(self) -> List[Tuple[FieldElement, FieldElement]]:
        return list(zip(self.xs, self.ys))


@dataclass(frozen=True)
class RationalFunction:
    """Reduced fraction num/den with a monic denominator."""
    num: Polynomial
    den: Polynomial

    def __call__(self, x: int) -> FieldElement:
        field = self.num.field
        return field.div(self.num(x), self.den(x))


@dataclass(frozen=True)
class DividedDiffTable:
    """
    Full divided-difference triangle of a function sampled at ``xs``.

    ``diffs[j][k]`` holds f[x_k, ..., x_{k+j}]; row 0 is the samples.
    """
    xs: Tuple[FieldElement, ...]
    diffs: Tuple[Tuple[FieldElement, ...], ...]

    def span(self, start: int, end: int) -> FieldElement:
        """f[x_start, ..., x_end] (0-based, inclusive)."""
        return self.diffs[end - start][start]


@lru_cache(maxsize=64)
def barycentric_weights(field: PrimeField, xs: Tuple[FieldElement, ...]) -> Tuple[FieldElement, ...]:
    """w_k = 1 / prod_{j != k} (x_k - x_j), cached per abscissa tuple."""
    p = field.p
    denoms = []
    for k, xk in enumerate(xs):
        acc = 1
        for j, xj in enumerate(xs):
            if j != k:
                acc = acc * (xk - xj) % p
        denoms.append(acc)
    return tuple(field.batch_inverse(denoms))


@lru_cache(maxsize=32)
def _cached_gap_inverses(field: PrimeField, xs: Tuple[FieldElement, ...]) -> Tuple[Tuple[FieldElement, ...], ...]:
    return tuple(_gap_inverse_levels(field, xs))


def _gap_inverse_levels(field: PrimeField, xs: Sequence[FieldElement]) -> Iterator[List[FieldElement]]:
    m = len(xs)
    for j in range(1, m):
        yield field.batch_inverse([xs[k + j] - xs[k] for k in range(m - j)])


def _difference_levels(field: PrimeField, xs: Tuple[FieldElement, ...],
                       ys: Sequence[FieldElement]) -> Iterator[Tuple[FieldElement, ...]]:
    """Successive rows of the divided-difference triangle."""
    p = field.p
    gaps = _cached_gap_inverses(field, xs) if len(xs) <= _GAP_CACHE_LIMIT else _gap_inverse_levels(field, xs)
    level = tuple(ys)
    yield level
    for inv_gaps in gaps:
        level = tuple((level[k + 1] - level[k]) * inv_gaps[k] % p for k in range(len(inv_gaps)))
        yield level


@lru_cache(maxsize=128)
def newton_coefficients(pts: EvalPointSet) -> Tuple[FieldElement, ...]:
    """Prefix divided differences f[x_1], f[x_1, x_2], ..., f[x_1, ..., x_m]."""
    return tuple(level[0] for level in _difference_levels(pts.field, pts.xs, pts.ys))


def divided_diff_table(pts: EvalPointSet) -> DividedDiffTable:
    return DividedDiffTable(pts.xs, tuple(_difference_levels(pts.field, pts.xs, pts.ys)))


def interpolate_poly(pts: EvalPointSet) -> Polynomial:
    """
    Unique polynomial of degree at most m-1 through all m points.

    Args:
        pts: At least one point

    Returns:
        Interpolating polynomial (Newton form converted to coefficients)
    """
    if len(pts) == 0:
        raise ValueError("interpolate_poly needs at least one point")
    field = pts.field
    p = field.p
    coefs = newton_coefficients(pts)
    acc = [coefs[-1]]
    for i in range(len(coefs) - 2, -1, -1):
        xi = pts.xs[i]
        nxt = [0] * (len(acc) + 1)
        for j, c in enumerate(acc):
            nxt[j + 1] += c
            nxt[j] -= xi * c
        nxt[0] += coefs[i]
        acc = [c % p for c in nxt]
    return Polynomial(field, tuple(acc))


def top_divided_difference(pts: EvalPointSet) -> FieldElement:
    """f[x_1, ..., x_m]; zero exactly when the interpolant has degree <= m-2."""
    w = barycentric_weights(pts.field, pts.xs)
    return sum(wk * yk for wk, yk in zip(w, pts.ys)) % pts.field.p


def _solve_linear(field: PrimeField, matrix: List[List[int]], rhs: List[int]) -> Optional[List[int]]:
    """One solution of matrix * s = rhs (free variables set to 0), or None."""
    p = field.p
    n_rows = len(matrix)
    n_cols = len(matrix[0]) if matrix else 0
    aug = [list(row) + [b % p] for row, b in zip(matrix, rhs)]
    pivots = []
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        piv = next((i for i in range(r, n_rows) if aug[i][c] % p), None)
        if piv is None:
            continue
        aug[r], aug[piv] = aug[piv], aug[r]
        inv = int(gmpy2.invert(aug[r][c], p))
        aug[r] = [v * inv % p for v in aug[r]]
        for i in range(n_rows):
            f = aug[i][c]
            if i != r and f:
                aug[i] = [(vi - f * vr) % p for vi, vr in zip(aug[i], aug[r])]
        pivots.append(c)
        r += 1
    if any(aug[i][-1] for i in range(r, n_rows)):
        return None
    solution = [0] * n_cols
    for i, c in enumerate(pivots):
        solution[c] = aug[i][-1]
    return solution


def solve_denominator(pts: EvalPointSet, deg_num: int, deg_den: int) -> Polynomial:
    """
    Smallest-degree monic Den such that y_k * Den(x_k) is a polynomial of
    degree <= deg_num on every point.

    The numerator is eliminated with barycentric weights: the values
    z_k = y_k * Den(x_k) lie on a degree-<=deg_num polynomial iff
    sum_k w_k x_k^j z_k = 0 for j < m - deg_num - 1. Those constraints are
    linear in Den's coefficients with Hankel entries
    M_s = sum_k w_k y_k x_k^s. The first degree t whose column depends on the
    lower ones gives Den; it is unique and already coprime to the numerator
    when m >= deg_num + deg_den + 1.

    Args:
        pts: Sample points
        deg_num: Numerator degree budget
        deg_den: Denominator degree budget

    Returns:
        Monic denominator polynomial

    Raises:
        Inconsistent: no rational function within the budget fits
    """
    m = len(pts)
    if deg_num < 0 or deg_den < 0:
        raise ValueError("Degree budgets must be non-negative")
    if m < deg_num + deg_den + 1:
        raise ValueError(f"{m} points cannot determine a ({deg_num}, {deg_den}) rational function")
    field = pts.field
    p = field.p
    n_rows = m - deg_num - 1
    n_moments = n_rows + deg_den
    w = barycentric_weights(field, pts.xs)

    moments = [0] * n_moments
    for xk, wk, yk in zip(pts.xs, w, pts.ys):
        term = wk * yk % p
        for s in range(n_moments):
            moments[s] += term
            term = term * xk % p
    moments = [v % p for v in moments]

    for t in range(deg_den + 1):
        matrix = [moments[j:j + t] for j in range(n_rows)]
        rhs = [-moments[j + t] for j in range(n_rows)]
        solution = _solve_linear(field, matrix, rhs)
        if solution is not None:
            return Polynomial(field, tuple(solution) + (1,))
    raise Inconsistent(f"No ({deg_num}, {deg_den}) rational function fits {m} points")


def interpolate_rational(pts: EvalPointSet, deg_num: int, deg_den: int) -> RationalFunction:
    """
    Cauchy interpolation: reduced Num/Den with Num(x_k) = y_k * Den(x_k)
    on all supplied points, deg Num <= deg_num, deg Den <= deg_den.

    Raises:
        Inconsistent: the points admit no such function
    """
    field = pts.field
    p = field.p
    den = solve_denominator(pts, deg_num, deg_den)
    den_vals = poly_eval_many(den, pts.xs)
    count = deg_num + 1
    z = tuple(y * dv % p for y, dv in zip(pts.ys[:count], den_vals[:count]))
    num = interpolate_poly(EvalPointSet(field, pts.xs[:count], z))
    if num.is_zero():
        return RationalFunction(num, Polynomial.constant(field, 1))
    g = poly_gcd(num, den)
    return RationalFunction(poly_divrem(num, g)[0], poly_divrem(den, g)[0])


def precompute_inverse_diff_tables(candidates: Sequence[Polynomial],
                                   xs: Sequence[FieldElement]) -> List[DividedDiffTable]:
    """
    Divided-difference tables of k -> 1/P_i(x_k) for each candidate.

    Args:
        candidates: Polynomials nonzero on every abscissa
        xs: Evaluation abscissas, in protocol order

    Returns:
        One table per candidate
    """
    xs = tuple(xs)
    tables = []
    for poly in candidates:
        values = poly_eval_many(poly, xs)
        if any(v == 0 for v in values):
            raise SingularAbscissa(f"{poly} vanishes on an evaluation point")
        inv = poly.field.batch_inverse(values)
        tables.append(divided_diff_table(EvalPointSet(poly.field, xs, tuple(inv))))
    return tables


def leibniz_degree_probe(u_pts: EvalPointSet, g_table: DividedDiffTable,
                         order: Optional[int] = None) -> FieldElement:
    """
    f[x_1, ..., x_J] of the pointwise product u * g by Leibniz's rule:
    sum_k u[x_1..x_k] * g[x_k..x_J].

    Args:
        u_pts: Samples of u
        g_table: Divided differences of g on the same abscissas
        order: J, the number of leading points (default: all)

    Returns:
        The order-(J-1) divided difference of the product
    """
    if tuple(u_pts.xs) != tuple(g_table.xs):
        raise AbscissaMismatch("Samples and table use different abscissas")
    m = len(u_pts)
    last = m if order is None else order
    if not 1 <= last <= m:
        raise ValueError(f"Probe order {last} outside [1, {m}]")
    u = newton_coefficients(u_pts)
    p = u_pts.field.p
    end = last - 1
    return sum(u[k] * g_table.diffs[end - k][k] for k in range(last)) % p


def random_poly_evaluations(field: PrimeField, degree: int, xs: Sequence[FieldElement],
                            rng: np.random.Generator) -> List[FieldElement]:
    """
    Values at ``xs`` of a uniformly random polynomial of degree <= ``degree``.

    The values on the first degree+1 abscissas are drawn uniformly and the rest
    follow by barycentric extension, which gives the same distribution as
    drawing coefficients and evaluating.
    """
    xs = tuple(xs)
    n = degree + 1
    if len(xs) <= n:
        return field.random_vector(len(xs), rng)
    p = field.p
    base_xs = xs[:n]
    base = field.random_vector(n, rng)
    weighted = [wj * yj % p for wj, yj in zip(barycentric_weights(field, base_xs), base)]
    out = list(base)
    for x in xs[n:]:
        gaps = [x - xj for xj in base_xs]
        inv = field.batch_inverse(gaps)
        node = 1
        for g in gaps:
            node = node * g % p
        out.append(node * (sum(a * b for a, b in zip(weighted, inv)) % p) % p)
    return out
