from itertools import product

import pytest

from dapsi.exceptions import (
    AbscissaMismatch,
    DuplicateAbscissa,
    Inconsistent,
    LengthMismatch,
    SingularAbscissa,
)
from dapsi.utils.field import poly_eval, poly_from_roots, random_poly
from dapsi.utils.interp import (
    EvalPointSet,
    divided_diff_table,
    interpolate_poly,
    interpolate_rational,
    leibniz_degree_probe,
    precompute_inverse_diff_tables,
    random_poly_evaluations,
    solve_denominator,
    top_divided_difference,
)


def _sample(field, poly, xs):
    return EvalPointSet(field, tuple(xs), tuple(poly_eval(poly, x) for x in xs))


def test_interpolate_quadratic(f7):
    poly = poly_from_roots(f7, [2, 3])
    assert interpolate_poly(_sample(f7, poly, [0, 1, 4])) == poly


def test_interpolate_random(big_field, rng):
    for degree in (0, 1, 5, 17):
        poly = random_poly(big_field, degree, rng)
        xs = range(100, 100 + degree + 1)
        assert interpolate_poly(_sample(big_field, poly, xs)) == poly


def test_point_set_validation(f7):
    with pytest.raises(DuplicateAbscissa):
        EvalPointSet(f7, (1, 8), (0, 0))
    with pytest.raises(LengthMismatch):
        EvalPointSet(f7, (1, 2), (0,))


def test_rational_reconstruction(f101):
    """(x+1)/(x+2) sampled at four points comes back reduced and monic."""
    xs = (0, 1, 3, 4)
    ys = tuple(f101.div(x + 1, x + 2) for x in xs)
    rf = interpolate_rational(EvalPointSet(f101, xs, ys), 1, 1)
    assert rf.num.coeffs == (1, 1)
    assert rf.den.coeffs == (2, 1)


def test_rational_polynomial_input(f101, rng):
    poly = random_poly(f101, 3, rng)
    rf = interpolate_rational(_sample(f101, poly, range(10, 16)), 3, 2)
    assert rf.den.coeffs == (1,)
    assert rf.num == poly


def test_inconsistent_count_small_field(f5):
    """Over F_5 with 4 points and budget (1, 1), exactly 500 of 625 value vectors admit no fit."""
    xs = (0, 1, 2, 3)
    failures = 0
    for ys in product(range(5), repeat=4):
        try:
            solve_denominator(EvalPointSet(f5, xs, ys), 1, 1)
        except Inconsistent:
            failures += 1
    assert failures == 500


def test_too_few_points(f101):
    with pytest.raises(ValueError):
        solve_denominator(EvalPointSet(f101, (1, 2), (3, 4)), 1, 1)


def test_top_difference_detects_low_degree(f5):
    """Of the 125 value vectors on 3 points, the 25 lying on a line have a zero top difference."""
    xs = (1, 2, 4)
    passing = sum(1 for ys in product(range(5), repeat=3)
                  if top_divided_difference(EvalPointSet(f5, xs, ys)) == 0)
    assert passing == 25


def test_inverse_table_matches_direct(f101):
    xs = tuple(range(20, 30))
    a = 7
    table = precompute_inverse_diff_tables([poly_from_roots(f101, [a])], xs)[0]
    direct = divided_diff_table(EvalPointSet(f101, xs, tuple(f101.inv(x - a) for x in xs)))
    assert table == direct


def test_inverse_table_rejects_vanishing_candidate(f101):
    with pytest.raises(SingularAbscissa):
        precompute_inverse_diff_tables([poly_from_roots(f101, [22])], range(20, 30))


def test_leibniz_probe_matches_leading_coefficient(big_field, rng):
    """The product probe equals the top coefficient of the interpolant of u / P."""
    T, t = 8, 2
    m = 2 * T - t + 2
    xs = tuple(range(50, 50 + m))
    for _ in range(50):
        u = random_poly(big_field, T, rng)
        roots = [int(r) for r in rng.integers(1000, 10**6, size=t)]
        if len(set(roots)) < t:
            continue
        den = poly_from_roots(big_field, roots)
        table = precompute_inverse_diff_tables([den], xs)[0]
        u_pts = _sample(big_field, u, xs)
        quotient = tuple(big_field.div(poly_eval(u, x), poly_eval(den, x)) for x in xs)
        interp = interpolate_poly(EvalPointSet(big_field, xs, quotient))
        leading = interp.coeffs[m - 1] if interp.degree == m - 1 else 0
        assert leibniz_degree_probe(u_pts, table) == leading


def test_leibniz_probe_orders(f101, rng):
    xs = tuple(range(30, 42))
    den = poly_from_roots(f101, [3, 5])
    table = precompute_inverse_diff_tables([den], xs)[0]
    u = random_poly(f101, 6, rng)
    u_pts = _sample(f101, u, xs)
    for order in range(1, len(xs) + 1):
        product_vals = tuple(f101.div(poly_eval(u, x), poly_eval(den, x)) for x in xs[:order])
        expected = top_divided_difference(EvalPointSet(f101, xs[:order], product_vals))
        assert leibniz_degree_probe(u_pts, table, order=order) == expected
    with pytest.raises(ValueError):
        leibniz_degree_probe(u_pts, table, order=0)


def test_leibniz_probe_needs_same_abscissas(f101):
    table = precompute_inverse_diff_tables([poly_from_roots(f101, [1])], (10, 11, 12))
    with pytest.raises(AbscissaMismatch):
        leibniz_degree_probe(EvalPointSet(f101, (10, 11, 13), (1, 2, 3)), table)


def test_random_poly_evaluations_degree(big_field, rng):
    xs = tuple(range(200, 220))
    values = random_poly_evaluations(big_field, 6, xs, rng)
    assert interpolate_poly(EvalPointSet(big_field, xs, tuple(values))).degree <= 6
