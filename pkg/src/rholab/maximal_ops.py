"""rho-adapted maximal and minimal operators on lattice fields.

Every operator here is a brute-force extremum over an explicit cube family:
for each cube the (penalized) average of |f| is computed once, then each
lattice point takes the best value among the cubes containing it.  Ties go
to the cube with the smallest index in the family.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .critical_radius import CriticalRadiusField
from .dyadic_cz import ShiftedGridSet, build_shifted_grids, dyadic_subcubes_meeting
from .lattice import (
    Cube,
    CubeFamily,
    FamilyIndex,
    Grid,
    LatticeError,
    LatticeField,
    dilate,
    dumps_field,
    dyadic_family,
    exhaustive_family,
    family_is_subcritical,
)

SLACK = 1e-12


class CoverageError(LatticeError):
    pass


@dataclass(eq=False)
class MaximalResult:
    values: LatticeField
    witness: np.ndarray  # cube index per lattice point, -1 where undefined
    family: CubeFamily
    defined: np.ndarray  # boolean mask of points where the extremum is taken
    flags: dict = field(default_factory=dict)

    def witness_cube(self, flat_index: int) -> Cube:
        k = int(self.witness.ravel()[flat_index])
        if k < 0:
            raise LatticeError("no witness at this point")
        return self.family[k]

    def write_witness_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["point_index", "cube_index"])
            for i, k in enumerate(self.witness.ravel()):
                w.writerow([i, int(k)])

    def dumps(self) -> str:
        return dumps_field(self.values)


def penalty(family: CubeFamily, rho: Optional[CriticalRadiusField], power: float) -> np.ndarray:
    """(1 + r/rho(center))^power per cube; 1 when rho is None or power is 0."""
    if rho is None or power == 0:
        return np.ones(len(family))
    return (1.0 + family.radii / rho(family.centers)) ** power


def pointwise_extreme(idx: FamilyIndex, vals: np.ndarray, how: str = "max",
                      active: Optional[np.ndarray] = None):
    """Best cube value at every lattice point; returns (values, witness, covered)."""
    grid = idx.grid
    better = np.greater if how == "max" else np.less
    init = -np.inf if how == "max" else np.inf
    out = np.full(grid.shape, init)
    wit = np.full(grid.shape, -1, dtype=np.int64)
    ks = np.flatnonzero(idx.nonempty if active is None else (idx.nonempty & active))
    for k in ks:
        sl = idx.slices(k)
        blk = out[sl]
        upd = better(vals[k], blk)
        if upd.any():
            blk[upd] = vals[k]
            wit[sl][upd] = k
    covered = wit >= 0
    out[~covered] = 0.0
    return out, wit, covered


def _abs_averages(f: LatticeField, idx: FamilyIndex, w: Optional[LatticeField] = None) -> np.ndarray:
    af = np.abs(f.samples)
    if w is None:
        return idx.sums(af) / np.maximum(idx.counts, 1)
    wm = idx.sums(w.samples)
    if np.any(wm[idx.nonempty] <= 0):
        raise LatticeError("weight vanishes on a cube")
    return idx.sums(af * w.samples) / np.where(wm > 0, wm, 1)


def m_rho_sigma(f: LatticeField, rho: Optional[CriticalRadiusField], sigma: float,
                family: Optional[CubeFamily] = None) -> MaximalResult:
    """sup over cubes Q(x0, r0) containing x of (1 + r0/rho(x0))^(-sigma) avg_Q |f|."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    family = family if family is not None else exhaustive_family(f.grid)
    idx = FamilyIndex(f.grid, family)
    vals = penalty(family, rho, -sigma) * _abs_averages(f, idx)
    out, wit, cov = pointwise_extreme(idx, vals, "max")
    if not cov.all():
        raise CoverageError("family does not cover lattice")
    return MaximalResult(f.with_samples(out), wit, family, cov)


def minimal_m(f: LatticeField, rho: Optional[CriticalRadiusField], theta: float,
              family: Optional[CubeFamily] = None) -> MaximalResult:
    """inf over cubes Q(x0, r0) containing x of (1 + r0/rho(x0))^theta avg_Q |f|."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    family = family if family is not None else exhaustive_family(f.grid)
    idx = FamilyIndex(f.grid, family)
    vals = penalty(family, rho, theta) * _abs_averages(f, idx)
    out, wit, cov = pointwise_extreme(idx, vals, "min")
    if not cov.all():
        raise CoverageError("family does not cover lattice")
    return MaximalResult(f.with_samples(out), wit, family, cov)


def region_mask(grid: Grid, R: Cube) -> np.ndarray:
    return grid.membership_mask(R)


def local_maximal(f: LatticeField, R: Cube, family: Optional[CubeFamily] = None) -> MaximalResult:
    """M_R f: sup over family cubes Q inside R that contain x; defined on the points of R.

    Points of R contained in no admissible cube are reported as undefined.
    """
    family = family if family is not None else exhaustive_family(f.grid)
    idx = FamilyIndex(f.grid, family)
    inside = family.inside(R)
    if not inside.any():
        raise CoverageError("no family cube lies inside R")
    vals = _abs_averages(f, idx)
    out, wit, cov = pointwise_extreme(idx, vals, "max", active=inside)
    inR = region_mask(f.grid, R)
    cov &= inR
    out[~cov] = 0.0
    wit[~cov] = -1
    return MaximalResult(f.with_samples(out), wit, family, cov,
                         {"uncovered_points_of_R": int(np.sum(inR & ~cov))})


def resolution_depth(grid: Grid, R: Cube) -> int:
    """Depth at which dyadic subcubes of R have side <= h."""
    return max(0, int(math.ceil(math.log2(R.side / grid.h) - 1e-12)))


def dyadic_maximal(f: LatticeField, R: Cube, w: Optional[LatticeField] = None,
                   depth: Optional[int] = None) -> MaximalResult:
    """sup over dyadic subcubes Q of R (to depth) containing x of (1/w(Q)) int_Q |f| w."""
    if depth is None:
        depth = resolution_depth(f.grid, R)
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    family = dyadic_family(R, depth)
    idx = FamilyIndex(f.grid, family)
    vals = _abs_averages(f, idx, w)
    out, wit, cov = pointwise_extreme(idx, vals, "max")
    inR = region_mask(f.grid, R)
    cov &= inR
    out[~cov] = 0.0
    wit[~cov] = -1
    return MaximalResult(f.with_samples(out), wit, family, cov)


@dataclass(eq=False)
class SplitResult:
    loc: MaximalResult
    glob: MaximalResult
    loc_empty: bool
    glob_empty: bool
    comparability: float  # max of max(loc, glob) / m_rho_sigma over the lattice
    dominated: bool  # m_rho_sigma <= loc + glob everywhere (with slack)


def glob_loc_split(f: LatticeField, rho: CriticalRadiusField, sigma: float,
                   family: Optional[CubeFamily] = None) -> SplitResult:
    """Local part over subcritical cubes (plain averages) and global part over
    supercritical cubes with the factor (rho(x_Q)/r_Q)^sigma."""
    family = family if family is not None else exhaustive_family(f.grid)
    idx = FamilyIndex(f.grid, family)
    avg = _abs_averages(f, idx)
    sub = family_is_subcritical(family, rho)
    ratio = rho(family.centers) / family.radii
    parts = []
    for active, vals in ((sub, avg), (~sub, ratio ** sigma * avg)):
        if active.any():
            out, wit, cov = pointwise_extreme(idx, vals, "max", active=active)
        else:
            out = np.zeros(f.shape)
            wit = np.full(f.shape, -1, dtype=np.int64)
            cov = np.zeros(f.shape, dtype=bool)
        parts.append(MaximalResult(f.with_samples(out), wit, family, cov))
    m = m_rho_sigma(f, rho, sigma, family).values.samples
    lo, gl = parts[0].values.samples, parts[1].values.samples
    both = np.maximum(lo, gl)
    pos = m > 0
    comp = float(np.max(both[pos] / m[pos])) if pos.any() else 1.0
    dominated = bool(np.all(m <= (lo + gl) * (1 + SLACK) + SLACK))
    return SplitResult(parts[0], parts[1], not sub.any(), bool(sub.all()), comp, dominated)


# ---------------------------------------------------------------- domination


@dataclass(eq=False)
class DominationReport:
    cubes: List[Cube]  # the 3^d cubes Q_i
    contains_enlarged: List[bool]  # Q_i contains 8 sqrt(d) Q
    inside_48d: List[bool]
    max_violation: float  # max over points of LHS - RHS (<= 0 means the bound holds)
    max_ratio: float  # max of LHS / RHS
    holds: bool
    lhs: np.ndarray = field(repr=False, default=None)
    rhs: np.ndarray = field(repr=False, default=None)


def _dyadic_sup_restricted(fs: np.ndarray, grid: Grid, root: Cube, target: Cube) -> np.ndarray:
    """M^D_root(f chi_target) on the points of target, f given on the whole lattice."""
    cubes = dyadic_subcubes_meeting(root, target, grid.h)
    fam = CubeFamily.from_cubes(cubes, "dyadic-of")
    idx = FamilyIndex(grid, fam)
    tmask = grid.membership_mask(target)
    vals = idx.sums(np.where(tmask, np.abs(fs), 0.0)) / np.maximum(idx.counts, 1)
    out, _, cov = pointwise_extreme(idx, vals, "max")
    return np.where(cov, out, 0.0)


def build_domination_cubes(Q: Cube, grids: ShiftedGridSet):
    """For each grid, a dyadic cube containing 8 sqrt(d) Q and lying in 48 d Q.

    The side starts at 2^(k+1) with 2^k < 8 sqrt(d) l(Q) <= 2^(k+1) and is
    doubled while the smallest cell containing the enlarged cube still fits
    in 48 d Q.  When no such cell exists (a cell boundary of that grid cuts
    the enlarged cube at every admissible scale) the cell of side 2^(k+1)
    containing the center of Q is used instead and flagged.
    """
    d = Q.dim
    big = dilate(Q, 8 * math.sqrt(d))
    outer = dilate(Q, 48 * d)
    k = math.ceil(math.log2(big.side) - 1e-12) - 1
    cubes, contains, inside = [], [], []
    for i in range(len(grids)):
        found = None
        kk = k + 1
        while 2.0 ** kk <= outer.side * (1 + 1e-12):
            c = grids.cell(i, big.low + 1e-9 * big.side, kk)
            if c.contains_cube(big, 1e-9):
                if outer.contains_cube(c, 1e-9):
                    found = c
                break
            kk += 1
        if found is None:
            found = grids.cell(i, Q.center, k + 1)
            contains.append(False)
        else:
            contains.append(True)
        cubes.append(found)
        inside.append(outer.contains_cube(found, 1e-9))
    return cubes, contains, inside


def local_to_dyadic_domination(f: LatticeField, Q: Cube, grids: Optional[ShiftedGridSet] = None,
                               family: Optional[CubeFamily] = None) -> DominationReport:
    """Check M_Q f <= 3^d sum_i M^D_{Q_i}(f chi_Q) on the lattice points of Q."""
    grid = f.grid
    d = grid.dim
    outer = dilate(Q, 48 * d)
    if np.any(outer.low < grid.low - 1e-12) or np.any(outer.high > grid.high + 1e-12):
        raise LatticeError("insufficient margin")
    grids = grids or build_shifted_grids(d)
    cubes, contains, inside = build_domination_cubes(Q, grids)
    if family is None:
        family = exhaustive_family(grid, levels=max(1, int(math.ceil(math.log2(Q.side / grid.h))) + 2), region=Q)
    lhs_res = local_maximal(f, Q, family)
    mask = lhs_res.defined
    lhs = lhs_res.values.samples
    rhs = np.zeros(grid.shape)
    for c in cubes:
        rhs += _dyadic_sup_restricted(f.samples, grid, c, Q)
    rhs *= 3 ** d
    diff = np.where(mask, lhs - rhs * (1 + SLACK), -np.inf)
    viol = float(np.max(diff)) if mask.any() else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mask & (rhs > 0), lhs / rhs, 0.0)
    return DominationReport(cubes, contains, inside, viol, float(np.max(ratio)), viol <= SLACK,
                            np.where(mask, lhs, np.nan), np.where(mask, rhs, np.nan))
