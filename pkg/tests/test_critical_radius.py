import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rholab.critical_radius import (
    RadiusError,
    constant_rho,
    critical_covering,
    exp_square_rho,
    harmonic_rho,
    reverse_holder_constant,
    scale_rho,
    shen_rho,
    verify_variation,
)
from rholab.lattice import LatticeField, exhaustive_family, make_grid


def test_harmonic_rho_is_accepted():
    rep = verify_variation(harmonic_rho(), [-10.0], [10.0], n_random=4000)
    assert rep.satisfied and rep.holds_on_samples
    assert math.isfinite(rep.C0_fit) and rep.C0_fit >= 1


def test_constant_rho_fits_trivially():
    rep = verify_variation(constant_rho(2.0), [-5.0, -5.0], [5.0, 5.0], grid_n=8, n_random=2000)
    assert rep.satisfied
    assert math.isclose(rep.C0_fit, 1.0)


def test_exp_square_rho_is_rejected():
    rep = verify_variation(exp_square_rho(), [-3.0], [3.0], n_random=4000)
    assert not rep.satisfied


def test_scale_rho():
    rho = harmonic_rho()
    r2 = scale_rho(rho, 2.0)
    x = np.array([[0.5], [3.0]])
    assert np.allclose(r2(x), 2 * rho(x))
    assert scale_rho(rho, 1.0) is rho
    with pytest.raises(RadiusError):
        scale_rho(rho, 0.0)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 50.0))
def test_shen_rho_constant_potential(c):
    r = shen_rho(lambda p: np.full(p.shape[0], c), np.zeros(3))
    assert math.isclose(r, math.sqrt(3 / (4 * math.pi * c)), rel_tol=2e-3)


def test_shen_rho_needs_dimension_three():
    with pytest.raises(RadiusError):
        shen_rho(lambda p: np.ones(p.shape[0]), np.zeros(2), d=2)


def test_covering_covers_with_bounded_overlap():
    grid = make_grid([-5.0], [5.0], 0.05)
    rho = harmonic_rho()
    rep = critical_covering(rho, grid)
    assert rep.covered
    for c, r in zip(rep.centers, rep.radii):
        assert math.isclose(r, rho.at(np.atleast_1d(c)))
    assert all(math.isfinite(v) for v in rep.max_overlap.values())


def test_reverse_holder_of_constant_potential():
    grid = make_grid([0.0, 0.0], [1.0, 1.0], 1 / 16, offset=True)
    V = LatticeField.constant(grid, 3.0)
    assert math.isclose(reverse_holder_constant(V, 2.0, exhaustive_family(grid)), 1.0)
