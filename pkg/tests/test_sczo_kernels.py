import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rholab.critical_radius import harmonic_rho
from rholab.lattice import LatticeField, make_grid
from rholab.sczo_kernels import (
    KERNELS,
    AnnulusSpec,
    KernelError,
    SampleSpec,
    annulus_mass,
    apply_kernel,
    build_kernel,
    check_size_ball,
    check_size_ls,
    check_size_pointwise,
    check_smoothness_decay,
    check_smoothness_pointwise,
    condition_suite,
    reports_json,
)

SURROGATE = build_kernel("surrogate", dim=1, N0=4.0, delta=1.0)


def test_registry():
    assert {"surrogate", "homogeneous", "riesz", "gaussian", "zero"} <= set(KERNELS)
    with pytest.raises(KernelError):
        build_kernel("no-such-kernel")


@pytest.mark.parametrize("N", [0, 1, 2, 4])
def test_surrogate_size_within_its_decay(N):
    rep = check_size_pointwise(SURROGATE, N)
    assert rep.passed and math.isfinite(rep.value)


def test_surrogate_size_beyond_its_decay_fails():
    rep = check_size_pointwise(SURROGATE, 6)
    assert not rep.passed and rep.growth > 1.5


def test_homogeneous_kernel_has_no_decay():
    K = build_kernel("homogeneous", dim=1, rho=harmonic_rho())
    assert check_size_pointwise(K, 0).passed
    assert not check_size_pointwise(K, 2).passed


def test_smoothness_and_ls_checks():
    assert check_smoothness_pointwise(SURROGATE, 1.0).passed
    assert check_size_ls(SURROGATE, 2.0, 4.0).passed
    assert check_size_ball(SURROGATE, 2.0, 2.0).passed
    assert check_smoothness_decay(SURROGATE, 2.0, 1.0, 1.0).passed


def test_diagonal_samples_rejected():
    X = np.zeros((3, 1))
    with pytest.raises(KernelError):
        check_size_pointwise(SURROGATE, 1, samples=(X, X))


def test_scaling_multiplies_fits():
    spec = SampleSpec((-4.0,), (4.0,), 1500, 3)
    for lam in (0.5, 3.0):
        a = check_size_pointwise(SURROGATE, 2, spec)
        b = check_size_pointwise(SURROGATE.scaled(lam), 2, spec)
        for k in a.fits:
            assert math.isclose(b.fits[k], lam * a.fits[k], rel_tol=1e-12)


def test_suite_and_json():
    reps = condition_suite(SURROGATE, 4.0, 2.0, 1.0, SampleSpec((-4.0,), (4.0,), 1000, 1), AnnulusSpec((-4.0,), (4.0,)))
    assert set(reps) == {"size-pointwise", "smoothness-pointwise", "size-ls", "smoothness-ls"}
    assert '"condition"' in reports_json(reps)
    assert "passed true" in reps["size-ls"].to_text()


def _lattice(points=41):
    return make_grid([-2.0], [2.0], 4.0 / (points - 1))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_apply_kernel_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    grid = _lattice()
    f = LatticeField(grid, rng.normal(size=grid.shape))
    g = LatticeField(grid, rng.normal(size=grid.shape))
    lhs = apply_kernel(SURROGATE, f.with_samples(a * f.samples + b * g.samples), grid.h).samples
    rhs = a * apply_kernel(SURROGATE, f, grid.h).samples + b * apply_kernel(SURROGATE, g, grid.h).samples
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_odd_kernel_cancels_on_constants():
    grid = _lattice()
    out = apply_kernel(SURROGATE, LatticeField.constant(grid, 1.0), 2 * grid.h)
    mid = grid.shape[0] // 2
    assert abs(grid.points()[mid, 0]) < 1e-12
    assert abs(out.samples[mid]) < 1e-12


def test_truncation_below_spacing_rejected():
    grid = _lattice()
    with pytest.raises(KernelError):
        apply_kernel(SURROGATE, LatticeField.constant(grid, 1.0), grid.h / 2)


def test_annulus_mass_bounds_truncation_difference():
    rng = np.random.default_rng(2)
    grid = _lattice()
    f = LatticeField(grid, rng.normal(size=grid.shape))
    e1, e2 = grid.h, 0.5
    diff = np.abs(apply_kernel(SURROGATE, f, e1).samples - apply_kernel(SURROGATE, f, e2).samples)
    assert np.all(diff <= annulus_mass(SURROGATE, f, e1, e2).samples + 1e-12)
