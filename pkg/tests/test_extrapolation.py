from fractions import Fraction as F
from itertools import combinations

import pytest

from sdefw.extrapolation import (SchemeSpec, WeightError, closed_form_m3,
                                 nv_scheme, solve_weights)


def test_single_level():
    s = solve_weights((1,))
    assert s.weights == (F(1),)
    assert s.weak_order == 2


def test_two_levels_match_reference_values():
    s = solve_weights((1, 2))
    assert s.weights == (F(-1, 3), F(4, 3))


def test_three_levels_closed_form_values():
    s = solve_weights((1, 2, 3))
    assert s.weights == (F(1, 24), F(-16, 15), F(81, 40))
    assert closed_form_m3(1, 2, 3) == s.weights


@pytest.mark.parametrize("triple", list(combinations(range(1, 7), 3)))
def test_closed_form_matches_solver_for_all_small_triples(triple):
    assert closed_form_m3(*triple) == solve_weights(triple).weights


@pytest.mark.parametrize("thetas", [
    (1,), (2,), (1, 2), (1, 3), (2, 5), (1, 2, 3), (2, 3, 5),
    (1, 2, 3, 4), (1, 2, 3, 4, 5),
])
def test_moment_conditions_exact(thetas):
    s = solve_weights(thetas)
    assert sum(s.weights) == 1
    for l in range(1, s.m):
        assert sum(f / F(t) ** (2 * l) for t, f in zip(s.thetas, s.weights)) == 0


def test_repeated_theta_rejected():
    with pytest.raises(WeightError):
        solve_weights((2, 2))


def test_non_integer_theta_rejected():
    with pytest.raises(WeightError):
        solve_weights((1, 2.5))
    with pytest.raises(WeightError):
        solve_weights((0,))


def test_closed_form_requires_increasing_levels():
    with pytest.raises(WeightError):
        closed_form_m3(2, 1, 3)


def test_scheme_spec_validates_weights():
    with pytest.raises(WeightError):
        SchemeSpec(thetas=(1, 2), weights=(F(1, 2), F(1, 2)))
    with pytest.raises(WeightError):
        SchemeSpec(thetas=(1, 2), weights=(F(2),))


def test_abs_weight_sum_grows_with_order():
    sums = [solve_weights(tuple(range(1, m + 1))).abs_weight_sum()
            for m in range(1, 5)]
    assert all(a < b for a, b in zip(sums, sums[1:]))


def test_describe_shows_exact_and_decimal():
    text = solve_weights((1, 2)).describe()
    assert "-1/3" in text
    assert "1.3333333333333333" in text
    assert "sum|f|" in text


def test_labels():
    assert nv_scheme().label() == "NV"
    assert solve_weights((1, 2, 3)).label() == "GF(1,2,3)"
