from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from momentbound.polyalg import (ExpPoly, expand_falling_factorial, grlex_key, poly_combine,
                                 shift_diff)


def polys(nvars=2, max_exp=3):
    exps = st.tuples(*[st.integers(0, max_exp)] * nvars)
    coeffs = st.fractions(min_value=-5, max_value=5, max_denominator=7)
    return st.dictionaries(exps, coeffs, max_size=5).map(lambda d: ExpPoly(nvars, d))


def test_falling_factorial_second_order():
    # X(X-1) = X^2 - X
    p = expand_falling_factorial({0: 2}, 2)
    assert p == ExpPoly(2, {(2, 0): 1, (1, 0): -1})


def test_falling_factorial_bilinear():
    p = expand_falling_factorial({0: 1, 1: 1}, 2)
    assert p == ExpPoly.monomial((1, 1))


def test_falling_factorial_rejects_high_order():
    with pytest.raises(ValueError):
        expand_falling_factorial({0: 3}, 1)


def test_shift_diff_square():
    # (x - 2)^2 - x^2 = -4x + 4
    assert shift_diff((2,), (-2,)) == ExpPoly(1, {(1,): -4, (0,): 4})


def test_shift_diff_zero_shift_vanishes():
    assert not shift_diff((3, 1), (0, 0))


def test_arity_mismatch():
    with pytest.raises(ValueError):
        ExpPoly(2, {(1,): 1})
    with pytest.raises(ValueError):
        poly_combine(ExpPoly.constant(1), ExpPoly.constant(2), "add")


def test_negative_exponent_rejected():
    with pytest.raises(ValueError):
        ExpPoly(1, {(-1,): 1})


def test_grlex_order():
    ordered = sorted([(0, 2), (1, 0), (0, 0), (1, 1), (2, 0)], key=grlex_key)
    assert ordered == [(0, 0), (1, 0), (2, 0), (1, 1), (0, 2)]


@given(polys(), polys(), polys())
def test_ring_axioms(p, q, r):
    assert p + q == q + p
    assert p * q == q * p
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    assert not (p - p)


@given(polys(), st.fractions(min_value=-3, max_value=3, max_denominator=5),
       st.tuples(st.integers(-3, 3), st.integers(-3, 3)))
def test_evaluation_is_a_homomorphism(p, c, pt):
    q = poly_combine(p, None, ("scale", c)) + ExpPoly.variable(2, 0)
    lhs = (p * q).evaluate(pt)
    assert lhs == pytest.approx(p.evaluate(pt) * q.evaluate(pt), abs=1e-9)


@given(st.tuples(st.integers(0, 4), st.integers(0, 3)),
       st.tuples(st.integers(-2, 2), st.integers(-2, 2)),
       st.tuples(st.integers(0, 6), st.integers(0, 6)))
def test_shift_diff_matches_pointwise(zeta, s, x):
    d = shift_diff(zeta, s)
    expected = ((x[0] + s[0]) ** zeta[0] * (x[1] + s[1]) ** zeta[1]
                - x[0] ** zeta[0] * x[1] ** zeta[1])
    assert d.evaluate(x) == pytest.approx(expected)
    assert all(isinstance(c, Fraction) for _, c in d)
