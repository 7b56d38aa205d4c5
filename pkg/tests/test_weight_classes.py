import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rholab.critical_radius import harmonic_rho
from rholab.lattice import LatticeField, exhaustive_family, make_grid
from rholab.maximal_ops import m_rho_sigma, minimal_m
from rholab.weight_classes import (
    RefinementStudy,
    TestBench,
    WeightError,
    a1_constant,
    ainf_constant,
    ainf_eps_check,
    ap_constant,
    bracket_weight,
    power_weight,
    refinement_study,
    rh_constant,
    rubio_de_francia_a1,
)

RHO = harmonic_rho()


def _weight(seed, points=48):
    rng = np.random.default_rng(seed)
    grid = make_grid([-3.0], [3.0], 6.0 / points, offset=True)
    return LatticeField(grid, rng.lognormal(sigma=1.0, size=grid.shape))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.2, 6.0))
def test_constants_at_least_one(seed, p):
    w = _weight(seed)
    assert ap_constant(w, p).value >= 1 - 1e-12
    assert a1_constant(w).value >= 1 - 1e-12
    assert rh_constant(w, p).value >= 1 - 1e-12
    assert rh_constant(w, math.inf).value >= 1 - 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_constants_invariant_under_scaling(seed, c):
    w = _weight(seed)
    cw = w.with_samples(c * w.samples)
    for fn in (lambda x: ap_constant(x, 2.0, 1.0, rho=RHO), lambda x: a1_constant(x, 1.0, rho=RHO),
               lambda x: rh_constant(x, 3.0, 1.0, rho=RHO)):
        assert math.isclose(fn(w).value, fn(cw).value, rel_tol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 3), st.floats(0, 3))
def test_constants_decrease_in_theta(seed, a, b):
    w = _weight(seed)
    lo, hi = sorted((a, b))
    assert ap_constant(w, 2.0, hi, rho=RHO).value <= ap_constant(w, 2.0, lo, rho=RHO).value * (1 + 1e-12)
    assert a1_constant(w, hi, rho=RHO).value <= a1_constant(w, lo, rho=RHO).value * (1 + 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 3))
def test_a1_and_rh_inf_maximal_identities(seed, theta):
    w = _weight(seed)
    fam = exhaustive_family(w.grid)
    a1 = a1_constant(w, theta, fam, RHO).value
    via_max = float(np.max(m_rho_sigma(w, RHO, theta, fam).values.samples / w.samples))
    assert math.isclose(a1, via_max, rel_tol=1e-12)
    rh = rh_constant(w, math.inf, theta, fam, RHO).value
    via_min = float(np.max(w.samples / minimal_m(w, RHO, theta, fam).values.samples))
    assert math.isclose(rh, via_min, rel_tol=1e-12)


def test_constant_weight_is_in_every_class():
    grid = make_grid([0.0], [1.0], 1 / 32, offset=True)
    one = LatticeField.constant(grid, 5.0)
    for est in (ap_constant(one, 2.0), a1_constant(one), rh_constant(one, 2.0), rh_constant(one, math.inf)):
        assert math.isclose(est.value, 1.0, rel_tol=1e-12)


def test_witness_attains_value():
    w = _weight(1)
    est = ap_constant(w, 3.0)
    assert est.witness is not None and math.isclose(est.per_cube[est.witness_index], est.value)
    assert est.to_dict()["class"] == "A_p(u)"


def test_nonpositive_weight_rejected():
    grid = make_grid([0.0], [1.0], 0.25)
    with pytest.raises(WeightError):
        ap_constant(LatticeField(grid, np.array([1.0, 0.0, 1.0, 1.0, 1.0])), 2.0)
    with pytest.raises(WeightError):
        ap_constant(LatticeField.constant(grid, 1.0), 1.0)


@pytest.mark.parametrize("scheme", ["all", "level", "dyadic", "dyadic-unions"])
def test_ainf_schemes_on_constant_weight(scheme):
    grid = make_grid([0.0], [1.0], 1 / 32, offset=True)
    one = LatticeField.constant(grid, 1.0)
    est = ainf_eps_check(one, 0.5, scheme=scheme)
    # for Lebesgue measure the ratio is |E|/|Q| against itself
    assert math.isclose(est.value, 1.0, rel_tol=1e-9)


def test_ainf_constant_is_best_over_ladder():
    w = LatticeField.from_function(power_weight(0.5), [-4.0], [4.0], 1 / 16, offset=True)
    best = ainf_constant(w, ps=(2.0, 4.0))
    assert best.value <= ap_constant(w, 2.0).value * (1 + 1e-12)


def test_refinement_study_detects_divergence():
    stable = refinement_study("sqrt", lambda h: ap_constant(
        LatticeField.from_function(power_weight(0.5), [-1.0], [1.0], h, offset=True), 2.0).value, 1 / 64)
    assert stable.stable() and not stable.diverges()
    # |x|^-2 is not locally integrable: A_2 climbs like a power of 1/h
    bad = refinement_study("inv-square", lambda h: ap_constant(
        LatticeField.from_function(power_weight(-2.0), [-1.0], [1.0], h, offset=True), 2.0).value, 1 / 64)
    assert bad.diverges() and not bad.stable()


def test_refinement_study_properties():
    st_ = RefinementStudy("x", [1.0, 0.5, 0.25], [1.0, 2.0, 4.0])
    assert st_.finite and math.isclose(st_.growth, 2.0)  # largest successive factor
    assert st_.diverges() and not st_.stable()
    flat = RefinementStudy("y", [1.0, 0.5, 0.25], [1.0, 1.01, 1.015])
    assert flat.stable()


def test_bracket_weight_fits_a_growth_exponent():
    small = TestBench(n_points=256, refinements=1)
    a = bracket_weight(0.3)
    th, study = small.fit_theta("bracket", small.a1(a))
    assert th is not None and study.stable()


def test_rubio_de_francia_iteration():
    w = LatticeField.from_function(bracket_weight(0.3), [-4.0], [4.0], 1 / 16, offset=True)
    res = rubio_de_francia_a1(w, RHO, 0.5)
    assert np.all(res.weight.samples >= w.samples - 1e-12)
    assert res.a1_value <= 2.0 + 2.0 ** -res.iterations * 10
    one = LatticeField.constant(w.grid, 1.0)
    assert math.isclose(rubio_de_francia_a1(one, RHO, 0.0).a1_value, 1.0, rel_tol=1e-9)
    # the penalty can only lower the constant
    assert rubio_de_francia_a1(one, RHO, 0.5).a1_value <= 1.0 + 1e-12
