"""Seeded randomized trials shared by the CLI and the test-suite.

Each trial returns plain dicts so that results can be printed, dumped to
JSON or asserted on directly.
"""
from __future__ import annotations

import math
import time
from typing import Optional

import numpy as np

from .dyadic_cz import (
    build_shifted_grids,
    check_cz_invariants,
    cz_decompose,
    localized_mixed_check,
)
from .dyadic_cz import enclosing_dyadic
from .lattice import Cube, Grid, LatticeField, exhaustive_family, make_grid
from .maximal_ops import local_to_dyadic_domination, m_rho_sigma

MEMBER_TOL = 1e-9


def brute_force_maximal(f: LatticeField, family) -> np.ndarray:
    """Classical maximal function by looping over cubes with explicit point tests.

    A point x belongs to a cube when low < x <= high on every axis; a lower
    face lying on the box boundary is closed.
    """
    grid = f.grid
    pts = grid.points()
    vals = np.abs(f.samples).ravel()
    tol = MEMBER_TOL * grid.h
    box_low = np.asarray(grid.low)
    best = np.full(len(pts), -np.inf)
    for Q in family:
        lo, hi = Q.low, Q.high
        above = (pts > lo + tol) | ((pts >= lo - tol) & (lo <= box_low + tol))
        mask = np.all(above & (pts <= hi + tol), axis=1)
        if mask.any():
            avg = vals[mask].mean()
            best[mask] = np.maximum(best[mask], avg)
    return best.reshape(grid.shape)


def reduction_trial(dim: int, points: int = 64, seed: int = 0) -> dict:
    """m_rho_sigma with sigma = 0 against the brute-force classical maximal function."""
    rng = np.random.default_rng(seed)
    grid = make_grid([0.0] * dim, [1.0] * dim, 1.0 / points, offset=True)
    f = LatticeField(grid, rng.exponential(size=grid.shape))
    family = exhaustive_family(grid)
    t0 = time.perf_counter()
    fast = m_rho_sigma(f, None, 0.0, family).values.samples
    elapsed = time.perf_counter() - t0
    slow = brute_force_maximal(f, family)
    return {"dim": dim, "points": grid.size, "cubes": len(family),
            "max_abs_diff": float(np.max(np.abs(fast - slow))), "seconds": elapsed}


def okikiolu_trials(dim: int, n: int = 1000, seed: int = 0) -> dict:
    """Random cubes; the smallest enclosing dyadic cube over the 3^d shifted grids."""
    rng = np.random.default_rng(seed)
    grids = build_shifted_grids(dim)
    worst = 0.0
    failures = 0
    for _ in range(n):
        side = float(2.0 ** rng.uniform(-6, 4))
        low = rng.uniform(-50, 50, dim)
        Q = Cube.from_corner(low, side)
        try:
            _, enc = enclosing_dyadic(Q, grids)
        except ValueError:
            failures += 1
            continue
        if not enc.contains_cube(Q, 1e-9):
            failures += 1
            continue
        worst = max(worst, enc.side / Q.side)
    return {"dim": dim, "trials": n, "failures": failures, "worst_ratio": worst,
            "passed": failures == 0 and worst <= 3 + 1e-12}


def domination_trials(dim: int, n: int = 100, seed: int = 0, h: float = 2.0 ** -4) -> dict:
    """Local maximal function of f on Q against 3^d dyadic maximal functions."""
    rng = np.random.default_rng(seed)
    violations = 0
    fallbacks = 0
    outside = 0
    worst = 0.0
    for _ in range(n):
        cells = int(rng.integers(2, 17 if dim == 1 else 9))
        side = cells * h
        low = rng.integers(-8, 8, dim) * h - h / 2
        Q = Cube.from_corner(low, side)
        c = np.asarray(Q.center)
        margin = np.ceil((24 * dim * side + 2 * h) / h) * h + h
        grid = Grid(np.round((c - margin) / h) * h, np.round((c + margin) / h) * h, h)
        pts = grid.points()
        kind = int(rng.integers(3))
        if kind == 0:
            vals = rng.exponential(size=grid.size)
        elif kind == 1:
            vals = (rng.random(grid.size) < 0.05) * rng.exponential(size=grid.size) * 10
        else:
            bump = c + rng.normal(size=dim) * side
            vals = np.exp(-np.sum((pts - bump) ** 2, axis=1) / (0.1 * side) ** 2)
        rep = local_to_dyadic_domination(LatticeField(grid, vals.reshape(grid.shape)), Q)
        violations += 0 if rep.holds else 1
        fallbacks += sum(not x for x in rep.contains_enlarged)
        outside += sum(not x for x in rep.inside_48d)
        worst = max(worst, rep.max_ratio)
    return {"dim": dim, "trials": n, "violations": violations, "outside_48d": outside,
            "fallback_cubes": fallbacks, "worst_ratio": worst,
            "passed": violations == 0 and outside == 0}


def _random_field(rng, grid: Grid, positive: bool) -> np.ndarray:
    kind = int(rng.integers(3))
    if kind == 0:
        vals = rng.exponential(size=grid.shape)
    elif kind == 1:
        vals = (rng.random(grid.shape) < 0.1) * rng.exponential(size=grid.shape) * 20
    else:
        vals = rng.lognormal(sigma=1.5, size=grid.shape)
    return vals + 0.05 if positive else vals


def cz_trials(n: int = 100, seed: int = 0, dims=(1, 2)) -> dict:
    """Decomposition invariants on random (f, v, t); v = 1 in every third trial."""
    rng = np.random.default_rng(seed)
    failures = []
    worst_gamma_unweighted = 0.0
    t0 = time.perf_counter()
    for k in range(n):
        dim = dims[k % len(dims)]
        points = 64 if dim == 1 else 16
        grid = make_grid([0.0] * dim, [1.0] * dim, 1.0 / points, offset=True)
        R = Cube.from_edges([0.0] * dim, [1.0] * dim)
        f = LatticeField(grid, _random_field(rng, grid, False))
        unweighted = k % 3 == 0
        v = None if unweighted else LatticeField(grid, _random_field(rng, grid, True))
        vs = np.ones(grid.shape) if v is None else v.samples
        avg = float(np.sum(f.samples * vs) / np.sum(vs))
        t = avg * float(2.0 ** rng.uniform(0.1, 4))
        cz = cz_decompose(f, R, v, t)
        inv = check_cz_invariants(f, v, cz)
        bad = [key for key, val in inv.items() if isinstance(val, (bool, np.bool_)) and not val]
        if unweighted:
            worst_gamma_unweighted = max(worst_gamma_unweighted, cz.gamma_realized)
            if cz.gamma_realized > 2 ** dim + 1e-12:
                bad.append("gamma_unweighted")
        if bad:
            failures.append({"trial": k, "failed": bad})
    return {"trials": n, "failures": failures, "worst_gamma_unweighted": worst_gamma_unweighted,
            "seconds": time.perf_counter() - t0, "passed": not failures}


def localized_oracle(seed: int = 0, dim: int = 1, points: int = 128, steps: int = 24,
                     f: Optional[LatticeField] = None) -> dict:
    """Dyadic weak-type ratio with u = v = 1; the stopped cubes give ratio <= 1 exactly."""
    rng = np.random.default_rng(seed)
    grid = make_grid([0.0] * dim, [1.0] * dim, 1.0 / points, offset=True)
    R = Cube.from_edges([0.0] * dim, [1.0] * dim)
    if f is None:
        f = LatticeField(grid, _random_field(rng, grid, False))
    avg = float(np.mean(np.abs(f.samples)))
    top = float(np.max(np.abs(f.samples)))
    ladder = avg * 2.0 ** np.linspace(0, math.log2(max(top / avg, 2.0)) + 1, steps)
    rec = localized_mixed_check(f, R, None, None, ladder)
    return {"sup_ratio": rec.sup_ratio, "i3_max_relative": rec.meta["i3_max_relative"],
            "passed": rec.sup_ratio <= 1 + 1e-9}
