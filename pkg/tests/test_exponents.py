import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rholab.exponents import (
    ExponentError,
    as_fraction,
    conjugate,
    exponent_engineering,
    exponent_table,
    power_lemma_q,
    power_lemma_thetas,
    render,
)

fractions = st.fractions(min_value=Fraction(51, 50), max_value=20, max_denominator=50)


def test_float_inputs_become_exact():
    assert as_fraction(0.25) == Fraction(1, 4)
    assert as_fraction("3/7") == Fraction(3, 7)
    with pytest.raises(ExponentError):
        as_fraction(math.inf)


def test_conjugate_endpoints():
    assert conjugate(2) == 2
    assert conjugate(1) == math.inf
    assert conjugate(math.inf) == 1
    with pytest.raises(ExponentError):
        conjugate(Fraction(1, 2))


@given(fractions)
def test_conjugate_is_involution(p):
    assert conjugate(conjugate(p)) == p
    assert 1 / p + 1 / conjugate(p) == 1


@given(fractions, fractions)
def test_power_lemma_q(p, s):
    assert power_lemma_q(p, s) == s * (p - 1) + 1


@given(fractions, fractions, st.fractions(0, 5), st.fractions(0, 5))
def test_power_lemma_thetas_forms(p, s, t1, t2):
    out = power_lemma_thetas(p, s, t1, t2)
    q = out["q"]
    assert out["theta0"] == (p * s * t2 + s * t1) / q
    assert out["converse_ap"] * s * p == q * t1


@given(fractions, st.fractions(Fraction(1, 50), 5, max_denominator=50))
def test_engineering_identities_hold_exactly(sp, eps):
    out = exponent_engineering(sp, eps)
    assert out["alpha_identity"] and out["ratio_identity"] and out["gap_identity"]
    assert out["q_prime"] > sp


def test_engineering_quarter():
    out = exponent_engineering(2, Fraction(1, 4))
    assert out["q_prime"] == 6 and out["alpha"] == Fraction(5, 2) and out["class_index"] == 3


def test_table_values():
    assert exponent_table(2, 3, 1)["p0"] == 6
    assert exponent_table(3, 3, 1)["p0"] == math.inf
    assert exponent_table(4, 3, 1)["q_gamma"] == 8
    assert exponent_table(4, 3, Fraction(1, 2))["q_gamma"] is None
    assert exponent_table(4, 3, 2)["q_over_gamma"] is None
    assert exponent_table(4, 5, 2)["q_over_gamma"] == 2


def test_table_errors():
    with pytest.raises(ExponentError):
        exponent_table(2, 2, 1)
    with pytest.raises(ExponentError):
        exponent_table(Fraction(3, 2), 3, 1)


def test_render():
    assert render(Fraction(6)) == "6" and render(math.inf) == "inf" and render(Fraction(5, 2)) == "5/2"
    assert render(None) == "n/a"
