from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from sdefw.extrapolation import solve_weights
from sdefw.free_algebra import (AlgebraError, DomainError, TruncatedSeries,
                                bch_component, build_p, build_q, critical_check,
                                exp_trunc, fujiwara_expansion_check, log_trunc,
                                mul, order_condition_check, project,
                                residual_series, run_verification_suite,
                                telescoping_identity_check, word_count)


def series(d, D, coeffs):
    return TruncatedSeries(d + 1, D, {tuple(w): F(c) for w, c in coeffs.items()})


def letter(i, d, D):
    return TruncatedSeries.letter(i, d + 1, D)


# -- multiplication ------------------------------------------------------------------

def test_mul_distributes():
    one_plus_a0 = series(1, 2, {(): 1, (0,): 1})
    one_plus_a1 = series(1, 2, {(): 1, (1,): 1})
    got = mul(one_plus_a0, one_plus_a1)
    assert got == series(1, 2, {(): 1, (0,): 1, (1,): 1, (0, 1): 1})


def test_mul_unit():
    x = series(1, 3, {(0, 1): F(2, 3), (1,): -1})
    unit = TruncatedSeries.unit(2, 3)
    assert mul(x, unit) == x
    assert mul(unit, x) == x


def test_mul_noncommutative_square():
    s = series(1, 2, {(0,): 1, (1,): 1})
    sq = mul(s, s)
    assert sq == series(1, 2, {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): 1})
    assert sq.coeff((0, 1)) == sq.coeff((1, 0))  # equal values, distinct words
    assert (0, 1) != (1, 0)


def test_mul_truncates():
    a0 = letter(0, 1, 1)
    assert mul(a0, a0).is_zero()


def test_mul_rejects_mismatched_spaces():
    with pytest.raises(AlgebraError):
        mul(letter(0, 1, 2), letter(0, 1, 3))
    with pytest.raises(AlgebraError):
        mul(letter(0, 1, 2), letter(0, 2, 2))


def test_word_budget_guard():
    with pytest.raises(AlgebraError, match="budget"):
        TruncatedSeries(2, 5, {}, budget=10)
    assert word_count(2, 5) == 63


# -- exp / log ------------------------------------------------------------------------

def test_exp_single_letter():
    got = exp_trunc(letter(0, 1, 3))
    assert got == series(1, 3, {(): 1, (0,): 1, (0, 0): F(1, 2), (0, 0, 0): F(1, 6)})


def test_exp_zero():
    assert exp_trunc(TruncatedSeries.zero(2, 4)) == TruncatedSeries.unit(2, 4)


def test_exp_rejects_constant_term():
    with pytest.raises(DomainError):
        exp_trunc(TruncatedSeries.unit(2, 3))


def test_log_unit_is_zero():
    assert log_trunc(TruncatedSeries.unit(2, 4)).is_zero()


def test_log_rejects_wrong_constant_term():
    with pytest.raises(DomainError):
        log_trunc(TruncatedSeries.zero(2, 3))


def test_log_exp_sum_of_letters():
    u = series(1, 4, {(0,): 1, (1,): 1})
    assert log_trunc(exp_trunc(u)) == u


def test_log_of_exp_product_degree_two():
    # by hand: log(exp a0 exp a1) = a0 + a1 + (a0a1 - a1a0)/2 at degree 2
    v = mul(exp_trunc(letter(0, 1, 2)), exp_trunc(letter(1, 1, 2)))
    assert log_trunc(v) == series(1, 2, {(0,): 1, (1,): 1,
                                         (0, 1): F(1, 2), (1, 0): F(-1, 2)})


@st.composite
def sparse_zero_const(draw):
    d = draw(st.integers(0, 2))
    D = draw(st.integers(1, 5))
    n_terms = draw(st.integers(1, 4))
    coeffs = {}
    for _ in range(n_terms):
        deg = draw(st.integers(1, D))
        word = tuple(draw(st.integers(0, d)) for _ in range(deg))
        coeffs[word] = F(draw(st.integers(-4, 4)), draw(st.integers(1, 4)))
    return TruncatedSeries(d + 1, D, coeffs)


@settings(max_examples=40, deadline=None)
@given(sparse_zero_const())
def test_log_exp_roundtrip(u):
    assert log_trunc(exp_trunc(u)) == u


@settings(max_examples=40, deadline=None)
@given(sparse_zero_const())
def test_exp_log_roundtrip(u):
    v = TruncatedSeries.unit(u.alphabet_size, u.max_degree) + u
    assert exp_trunc(log_trunc(v)) == v


@settings(max_examples=30, deadline=None)
@given(sparse_zero_const(), sparse_zero_const(), sparse_zero_const())
def test_ring_axioms(x, y, z):
    # bring everybody into one space
    d = max(x.alphabet_size, y.alphabet_size, z.alphabet_size) - 1
    D = max(x.max_degree, y.max_degree, z.max_degree)

    def lift(s):
        return TruncatedSeries(d + 1, D, {w: c for w, c in s.items()})

    x, y, z = lift(x), lift(y), lift(z)
    assert mul(mul(x, y), z) == mul(x, mul(y, z))
    assert mul(x, y + z) == mul(x, y) + mul(x, z)
    assert mul(y + z, x) == mul(y, x) + mul(z, x)
    unit = TruncatedSeries.unit(d + 1, D)
    assert mul(unit, x) == x == mul(x, unit)


# -- projections ------------------------------------------------------------------------

def test_project_examples():
    s = series(1, 2, {(): 1, (0,): 1, (0, 1): 1})
    assert project(s, 1, exact=True) == series(1, 2, {(0,): 1})
    assert project(s, 1) == series(1, 2, {(): 1, (0,): 1})
    with pytest.raises(AlgebraError):
        project(s, 3)


@pytest.mark.parametrize("theta", [1, 2, 3])
@pytest.mark.parametrize("d", [0, 1, 2])
def test_low_degree_match(theta, d):
    q = build_q(theta, "symmetrized", d, 3)
    p = build_p(d, 3)
    assert project(q, 2) == project(p, 2)


# -- p and q builders ------------------------------------------------------------------

def test_build_p_small():
    assert build_p(0, 2) == series(0, 2, {(): 1, (0,): 1, (0, 0): F(1, 2)})
    assert build_p(1, 1) == series(1, 1, {(): 1, (0,): 1, (1,): 1})


def test_build_p_word_coefficients():
    # every degree-k word appears in (sum of letters)^k exactly once
    p = build_p(2, 4)
    import math
    for w, c in p.items():
        assert c == F(1, math.factorial(len(w)))
    assert len([w for w, _ in p.items() if len(w) == 3]) == 27


def test_build_q_single_letter():
    for theta in (1, 2, 5):
        assert build_q(theta, "symmetrized", 0, 4) == exp_trunc(letter(0, 0, 4))


def test_build_q_nonnegative_coefficients():
    for theta in (1, 2, 3):
        q = build_q(theta, "symmetrized", 2, 4)
        assert all(c > 0 for _, c in q.items())


def test_build_q_rejects_bad_theta():
    with pytest.raises(AlgebraError):
        build_q(0, "forward", 1, 2)
    with pytest.raises(AlgebraError):
        build_q(1, "sideways", 1, 2)


# -- expansion and BCH identities --------------------------------------------------------

@pytest.mark.parametrize("d,D", [(0, 4), (1, 5), (2, 5)])
def test_fujiwara_expansion(d, D):
    ok, fail_deg = fujiwara_expansion_check(d, D)
    assert ok and fail_deg is None


def test_bch_first_component():
    got = bch_component(0, 1, 1, 1, 2)
    assert got.series == series(1, 2, {(0,): 1, (1,): 1})
    assert got.degree == 1


def test_bch_second_component():
    got = bch_component(0, 1, 2, 1, 2)
    assert got.series == series(1, 2, {(0, 1): F(1, 2), (1, 0): F(-1, 2)})


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_bch_antisymmetry(n):
    ab = bch_component(0, 1, n, 1, n).series
    ba = bch_component(1, 0, n, 1, n).series
    assert ab == ba.scale(F((-1) ** (n + 1)))


def test_bch_degree_guard():
    with pytest.raises(AlgebraError):
        bch_component(0, 1, 4, 1, 3)


# -- order conditions ---------------------------------------------------------------------

@pytest.mark.parametrize("thetas,d", [
    ((1,), 1), ((1,), 2),
    ((1, 2), 1), ((1, 2), 2),
    ((2, 3), 1), ((2, 3), 2),
    ((1, 2, 3), 1), ((1, 2, 3), 2),
])
def test_order_condition(thetas, d):
    scheme = solve_weights(thetas)
    ok, deg = order_condition_check(scheme, d, 2 * scheme.m)
    assert ok
    assert deg == 2 * scheme.m


def test_order_condition_fails_with_wrong_weights():
    from sdefw.extrapolation import SchemeSpec
    bad = SchemeSpec(thetas=(1,), weights=(F(1),))
    # order holds for the true scheme but not past degree 2m with one level
    ok, deg = order_condition_check(bad, 1, 2)
    assert ok
    # the residual of a single level is nonzero at degree 3
    res = residual_series(bad, 1, 4)
    assert res.min_degree() == 3


@pytest.mark.parametrize("m,l", [(3, 2), (4, 2), (4, 3)])
def test_critical_vanishing(m, l):
    scheme = solve_weights(tuple(range(1, m + 1)))
    assert critical_check(scheme, l, 1, 2 * m + l - 1)


def test_critical_range_guard():
    scheme = solve_weights((1, 2, 3))
    with pytest.raises(AlgebraError):
        critical_check(scheme, 3, 1, 10)   # l must stay below m
    with pytest.raises(AlgebraError):
        critical_check(scheme, 1, 1, 10)


# -- telescoping decomposition -------------------------------------------------------------

def test_telescoping_m1():
    q = build_q(1, "symmetrized", 1, 4)
    p = build_p(1, 4)
    assert telescoping_identity_check(q, p, 2, 1)


def test_telescoping_equal_arguments():
    p = build_p(1, 4)
    assert telescoping_identity_check(p, p, 3, 2)


def test_telescoping_random_sparse():
    q = series(1, 5, {(): 1, (0,): F(1, 2), (1, 1): -2, (0, 1, 0): F(3, 4)})
    p = series(1, 5, {(): 1, (1,): F(-1, 3), (0, 0): 1, (1, 0, 1): F(2, 5)})
    assert telescoping_identity_check(q, p, 3, 2)
    assert telescoping_identity_check(q, p, 4, 3)
    assert telescoping_identity_check(q, p, 4, 2)


# -- parity strengthening --------------------------------------------------------------------

@pytest.mark.parametrize("thetas", [(1,), (1, 2), (2, 3)])
def test_first_residual_degree_is_odd(thetas):
    scheme = solve_weights(thetas)
    res = residual_series(scheme, 1, 2 * scheme.m + 2)
    deg = res.min_degree()
    assert deg is not None
    assert deg == 2 * scheme.m + 1     # odd, directly above the verified range


def test_single_level_residual_odd():
    for theta in (1, 2, 3):
        q = build_q(theta, "symmetrized", 1, 4)
        p = build_p(1, 4)
        assert (q - p).min_degree() == 3


# -- verification suite -------------------------------------------------------------------

def test_verification_suite_all_pass():
    results = run_verification_suite(2, 2)
    assert results
    assert all(r.passed for r in results)
    line = results[0].line()
    assert line.startswith("CHECK ") and line.endswith("PASS")


def test_check_line_failure_format():
    from sdefw.free_algebra import CheckResult
    line = CheckResult("demo", 1, 4, 2, False, 3).line()
    assert line == "CHECK demo d=1 D=4 m=2 -> FAIL[3]"
