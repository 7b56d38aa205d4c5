import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rholab.critical_radius import harmonic_rho
from rholab.lattice import Cube, LatticeField, dyadic_family, exhaustive_family, make_grid
from rholab.maximal_ops import (
    dyadic_maximal,
    glob_loc_split,
    local_maximal,
    m_rho_sigma,
    minimal_m,
    penalty,
)
from rholab.trials import brute_force_maximal

RHO = harmonic_rho()


def _field(seed, dim=1, points=32):
    rng = np.random.default_rng(seed)
    grid = make_grid([-2.0] * dim, [2.0] * dim, 4.0 / points, offset=True)
    return LatticeField(grid, rng.normal(size=grid.shape))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 4), st.floats(0, 4))
def test_penalized_maximal_is_monotone_in_sigma(seed, a, b):
    f = _field(seed)
    lo, hi = sorted((a, b))
    m_lo = m_rho_sigma(f, RHO, lo).values.samples
    m_hi = m_rho_sigma(f, RHO, hi).values.samples
    assert np.all(m_hi <= m_lo * (1 + 1e-12))
    # the singleton cube bounds it below, the sup above
    assert np.all(m_hi >= np.abs(f.samples) * (1 + f.h / 2 / RHO(f.grid.points())) ** -hi
                  * (1 - 1e-12))
    assert np.all(m_lo <= np.abs(f.samples).max() * (1 + 1e-12))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 4), st.floats(0, 4))
def test_minimal_operator_is_monotone_in_theta(seed, a, b):
    f = _field(seed)
    lo, hi = sorted((a, b))
    assert np.all(minimal_m(f, RHO, lo).values.samples <= minimal_m(f, RHO, hi).values.samples * (1 + 1e-12))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_positive_homogeneity(seed, c):
    f = _field(seed)
    a = m_rho_sigma(f, RHO, 1.0).values.samples
    b = m_rho_sigma(f.with_samples(c * f.samples), RHO, 1.0).values.samples
    assert np.allclose(b, abs(c) * a, rtol=1e-12, atol=0)


def test_penalty_values():
    grid = make_grid([0.0], [1.0], 0.25)
    fam = exhaustive_family(grid)
    p = penalty(fam, RHO, 2.0)
    c = fam.centers[:, 0]
    assert np.allclose(p, (1 + fam.radii * (1 + np.abs(c))) ** 2)
    assert np.all(penalty(fam, None, 2.0) == 1.0)


def test_witness_is_a_cube_containing_the_point():
    f = _field(3)
    res = m_rho_sigma(f, RHO, 1.0)
    for i in range(0, f.grid.size, 7):
        Q = res.witness_cube(i)
        assert f.grid.membership_mask(Q).ravel()[i]


def test_dyadic_maximal_against_loop():
    grid = make_grid([0.0, 0.0], [1.0, 1.0], 1 / 16, offset=True)
    rng = np.random.default_rng(5)
    f = LatticeField(grid, rng.exponential(size=grid.shape))
    R = Cube.from_edges([0, 0], [1, 1])
    fast = dyadic_maximal(f, R).values.samples
    slow = brute_force_maximal(f, dyadic_family(R, 4))
    assert np.allclose(fast, slow, rtol=1e-12, atol=1e-14)


def test_local_maximal_defined_inside_region():
    f = _field(2)
    R = Cube.from_edges([-1.0], [1.0])
    res = local_maximal(f, R)
    inside = f.grid.membership_mask(R)
    assert not np.any(res.defined & ~inside)
    assert res.defined[inside].any()


def test_glob_loc_split_dominates():
    f = _field(4)
    split = glob_loc_split(f, RHO, 2.0)
    assert split.dominated
    # (1 + r/rho) <= 2 on subcritical cubes and <= 2 r/rho on the others
    assert split.comparability <= 2 ** 2 + 1e-9


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        m_rho_sigma(_field(0), RHO, -1.0)
