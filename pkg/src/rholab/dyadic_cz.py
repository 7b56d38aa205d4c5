"""Shifted dyadic grids and the weighted Calderon-Zygmund decomposition.

Grids.  Grid number i of a ShiftedGridSet is the standard dyadic grid
translated by anchor + t_i * 2^K / 3 with t_i in {0, 1, 2}^d.  Because
2^(K-j) is never divisible by 3, at every scale 2^j <= 2^K the three
translations of an axis put their cell boundaries at offsets
{0, 1/3, 2/3} * 2^j.  Any cube of side l <= 2^K * 2/3 therefore sits in a
cell of some grid with side in (1.5 l, 3 l].

Decomposition.  The stopping time runs over the dyadic subcubes of a root
cube R and selects a cube the first time its v-weighted average of f
exceeds t.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .lattice import Cube, Grid, LatticeError, LatticeField, dumps_field, dyadic_children

DEFAULT_TOP = 10  # grids are exact for cubes of side up to (2/3) 2^10


class DyadicError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ShiftedGridSet:
    dim: int
    top: int = DEFAULT_TOP
    anchor: tuple = ()

    def __post_init__(self):
        if not 1 <= self.dim <= 3:
            raise DyadicError("dimension must be 1, 2 or 3")
        if not self.anchor:
            object.__setattr__(self, "anchor", (0.0,) * self.dim)

    @property
    def shifts(self) -> np.ndarray:
        """(3^d, d) translation vectors, components in {0, 1/3, 2/3} * 2^top."""
        base = np.array(list(itertools.product(range(3), repeat=self.dim)), dtype=float)
        return np.asarray(self.anchor) + base * (2.0 ** self.top / 3.0)

    def __len__(self) -> int:
        return 3 ** self.dim

    def cell(self, i: int, x: Sequence[float], k: int) -> Cube:
        """The cube of side 2^k in grid i whose closed cell contains x (lowest one on ties)."""
        s = self.shifts[i]
        side = 2.0 ** k
        m = np.floor((np.asarray(x, dtype=float) - s) / side)
        return Cube.from_corner(s + m * side, side)

    def cells_meeting(self, i: int, Q: Cube, k: int) -> List[Cube]:
        """All cubes of side 2^k in grid i whose interiors meet Q."""
        s = self.shifts[i]
        side = 2.0 ** k
        lo = np.floor((Q.low - s) / side).astype(int)
        hi = np.ceil((Q.high - s) / side).astype(int) - 1
        out = []
        for m in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)]):
            out.append(Cube.from_corner(s + np.asarray(m, dtype=float) * side, side))
        return out

    def is_dyadic(self, i: int, Q: Cube, tol: float = 1e-9) -> bool:
        k = math.log2(Q.side)
        if abs(k - round(k)) > tol:
            return False
        rel = (Q.low - self.shifts[i]) / Q.side
        return bool(np.all(np.abs(rel - np.round(rel)) <= tol))


def build_shifted_grids(d: int, top: int = DEFAULT_TOP, anchor: Sequence[float] = ()) -> ShiftedGridSet:
    return ShiftedGridSet(d, top, tuple(float(a) for a in anchor))


def verify_grid_axioms(grids: ShiftedGridSet, window: Cube, levels: Sequence[int]) -> dict:
    """Exhaustively check the three dyadic axioms on the cubes meeting a window.

    (1) every side is a power of two; (2) two cubes of one grid are nested or
    have disjoint interiors; (3) each level tiles the window (volume count).
    """
    report = {"power_of_two": True, "nested_or_disjoint": True, "tiling": True}
    for i in range(len(grids)):
        cubes = []
        for k in levels:
            layer = grids.cells_meeting(i, window, k)
            covered = sum(_overlap_volume(c, window) for c in layer)
            if not math.isclose(covered, window.volume, rel_tol=1e-9):
                report["tiling"] = False
            cubes.extend(layer)
        for c in cubes:
            k = math.log2(c.side)
            if abs(k - round(k)) > 1e-12:
                report["power_of_two"] = False
        for a, b in itertools.combinations(cubes, 2):
            inter = _overlap_volume(a, b)
            if inter > 1e-12 * min(a.volume, b.volume):
                if not (a.contains_cube(b, 1e-9) or b.contains_cube(a, 1e-9)):
                    report["nested_or_disjoint"] = False
    return report


def _overlap_volume(a: Cube, b: Cube) -> float:
    lo = np.maximum(a.low, b.low)
    hi = np.minimum(a.high, b.high)
    return float(np.prod(np.clip(hi - lo, 0, None)))


def enclosing_dyadic(Q: Cube, grids: ShiftedGridSet, tol: float = 1e-9):
    """Smallest dyadic cube over all grids containing Q; returns (index, cube).

    Scales are scanned upward from the first power of two >= l(Q); at each
    scale grids are tried in order.  The search always ends at a scale
    <= 3 l(Q) when l(Q) <= (2/3) 2^top.
    """
    k = math.ceil(math.log2(Q.side) - 1e-12)
    k_max = math.floor(math.log2(3 * Q.side) + 1e-12)
    for kk in range(k, max(k_max, k) + 1):
        for i in range(len(grids)):
            c = grids.cell(i, Q.low + tol * Q.side, kk)
            if c.contains_cube(Q, tol):
                return i, c
    raise DyadicError("no enclosing dyadic cube within ratio 3 (cube too large for the grid set)")


def dyadic_subcubes_meeting(root: Cube, target: Cube, min_side: float) -> List[Cube]:
    """Dyadic subcubes of root (root included) whose interiors meet target, down to min_side."""
    out = []
    stack = [root]
    while stack:
        c = stack.pop()
        if _overlap_volume(c, target) <= 0:
            continue
        out.append(c)
        if c.side / 2 >= min_side * (1 - 1e-12):
            stack.extend(dyadic_children(c))
    return out


# ---------------------------------------------------------------- CZ


@dataclass(frozen=True)
class SelectedCube:
    cube: Cube
    depth: int
    average: float
    resolution_limited: bool
    lo: tuple
    hi: tuple


@dataclass(eq=False)
class CZDecomposition:
    root: Cube
    t: float
    selected: List[SelectedCube]
    g: LatticeField
    bad: List[LatticeField]
    gamma_realized: float
    doubling_constant: float
    root_average: float

    @property
    def cubes(self) -> List[Cube]:
        return [s.cube for s in self.selected]

    def bad_total(self) -> np.ndarray:
        total = np.zeros(self.g.shape)
        for hfield in self.bad:
            total = total + hfield.samples
        return total

    def selected_mask(self) -> np.ndarray:
        mask = np.zeros(self.g.shape, dtype=bool)
        for s in self.selected:
            mask[tuple(slice(a, b + 1) for a, b in zip(s.lo, s.hi))] = True
        return mask

    def write_cubes_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["depth", *[f"center_{a}" for a in range(self.root.dim)], "radius", "avg", "flag"])
            for s in self.selected:
                w.writerow([s.depth, *[repr(c) for c in s.cube.center], repr(s.cube.radius), repr(s.average),
                            "resolution-limited" if s.resolution_limited else ""])

    def write_fields(self, prefix) -> None:
        with open(f"{prefix}_g.txt", "w", encoding="utf-8") as fh:
            fh.write(dumps_field(self.g))
        with open(f"{prefix}_h.txt", "w", encoding="utf-8") as fh:
            fh.write(dumps_field(self.g.with_samples(self.bad_total())))


def _bounds(grid: Grid, Q: Cube):
    lo, hi = grid.cube_bounds(Q)
    return tuple(int(a) for a in lo), tuple(int(b) for b in hi)


def _slices(lo, hi):
    return tuple(slice(a, b + 1) for a, b in zip(lo, hi))


def cz_decompose(f: LatticeField, R: Cube, v: Optional[LatticeField], t: float,
                 max_depth: int = 60) -> CZDecomposition:
    """Weighted Calderon-Zygmund decomposition of f >= 0 on the dyadic root R.

    g equals f off the selected cubes and the v-average of f on each of
    them; h_i = (f - average) on P_i and 0 elsewhere, so that the sum of
    h_i v over P_i vanishes up to rounding.
    """
    grid = f.grid
    fs = f.samples
    if np.any(fs < 0):
        raise DyadicError("f must be nonnegative")
    vs = np.ones(grid.shape) if v is None else v.require_weight("v").samples
    lo, hi = _bounds(grid, R)
    if any(a > b for a, b in zip(lo, hi)):
        raise LatticeError("cube outside lattice")
    sl = _slices(lo, hi)
    root_avg = float(np.sum(fs[sl] * vs[sl]) / np.sum(vs[sl]))
    if not t > root_avg:
        raise DyadicError("level below average")

    selected: List[SelectedCube] = []
    doubling = 1.0
    # depth-first, children in lexicographic order
    stack = [(R, 0, float(np.sum(vs[sl])))]
    while stack:
        cube, depth, vmass_parent = stack.pop()
        if depth >= max_depth:
            continue
        kids = []
        for child in dyadic_children(cube):
            clo, chi = _bounds(grid, child)
            if any(a > b for a, b in zip(clo, chi)):
                continue
            csl = _slices(clo, chi)
            vm = float(np.sum(vs[csl]))
            doubling = max(doubling, vmass_parent / vm)
            avg = float(np.sum(fs[csl] * vs[csl]) / vm)
            npts = int(np.prod([b - a + 1 for a, b in zip(clo, chi)]))
            if avg > t:
                selected.append(SelectedCube(child, depth + 1, avg, child.side <= grid.h * (1 + 1e-9), clo, chi))
            elif npts > 1:
                kids.append((child, depth + 1, vm))
        stack.extend(reversed(kids))

    selected.sort(key=lambda s: (s.depth, s.cube.center))
    g = fs.copy()
    bad = []
    for s in selected:
        csl = _slices(s.lo, s.hi)
        g[csl] = s.average
        hb = np.zeros(grid.shape)
        hb[csl] = fs[csl] - s.average
        bad.append(LatticeField(grid, hb))
    gamma = max((s.average / t for s in selected), default=0.0)
    return CZDecomposition(R, float(t), selected, LatticeField(grid, g), bad, gamma, doubling, root_avg)


def dyadic_doubling_constant(v: LatticeField, R: Cube, depth: int) -> float:
    """max over dyadic cubes of R (to depth) of v(parent) / v(child)."""
    grid = v.grid
    worst = 1.0
    layer = [R]
    for _ in range(depth):
        nxt = []
        for parent in layer:
            plo, phi = _bounds(grid, parent)
            pm = float(np.sum(v.samples[_slices(plo, phi)]))
            for child in dyadic_children(parent):
                clo, chi = _bounds(grid, child)
                if any(a > b for a, b in zip(clo, chi)):
                    continue
                worst = max(worst, pm / float(np.sum(v.samples[_slices(clo, chi)])))
                nxt.append(child)
        layer = nxt
    return worst


def check_cz_invariants(f: LatticeField, v: Optional[LatticeField], cz: CZDecomposition,
                        rel_tol: float = 1e-10) -> dict:
    """Post-conditions of a decomposition; returns a dict of booleans and measurements."""
    grid = f.grid
    fs = f.samples
    vs = np.ones(grid.shape) if v is None else v.samples
    t = cz.t
    count = np.zeros(grid.shape, dtype=int)
    for s in cz.selected:
        count[_slices(s.lo, s.hi)] += 1
    disjoint = bool(count.max(initial=0) <= 1)
    recon = cz.g.samples + cz.bad_total()
    recon_err = float(np.max(np.abs(recon - fs)))
    off = ~cz.selected_mask()
    bitwise_off = bool(np.array_equal(cz.g.samples[off], fs[off]))
    scale = float(np.max(np.abs(fs))) if fs.size else 1.0
    mean_zero = True
    worst_mean = 0.0
    for s, hb in zip(cz.selected, cz.bad):
        csl = _slices(s.lo, s.hi)
        num = abs(float(np.sum(hb.samples[csl] * vs[csl])))
        den = float(np.sum(np.abs(fs[csl]) * vs[csl])) or 1.0
        worst_mean = max(worst_mean, num / den)
        if num > rel_tol * den:
            mean_zero = False
    levels_ok = all(t <= s.average <= cz.gamma_realized * t * (1 + 1e-12) for s in cz.selected)
    g_bound = bool(np.all(np.abs(cz.g.samples[cz.selected_mask()]) <= cz.gamma_realized * t * (1 + 1e-12)))
    parents_ok = True
    for s in cz.selected:
        if s.depth == 1:
            continue
        parent = Cube(_parent_center(cz.root, s.cube, s.depth), s.cube.radius * 2)
        plo, phi = _bounds(grid, parent)
        psl = _slices(plo, phi)
        pavg = float(np.sum(fs[psl] * vs[psl]) / np.sum(vs[psl]))
        if pavg > t * (1 + 1e-12):
            parents_ok = False
    return {
        "disjoint": disjoint,
        "reconstruction_error": recon_err,
        "reconstruction_ok": recon_err <= 4 * np.finfo(float).eps * max(scale, cz.gamma_realized * t),
        "exact_off_selected": bitwise_off,
        "mean_zero": mean_zero,
        "worst_mean_ratio": worst_mean,
        "levels_ok": levels_ok,
        "g_bounded": g_bound,
        "parents_maximal": parents_ok,
    }


def _parent_center(root: Cube, cube: Cube, depth: int) -> tuple:
    side = cube.side * 2
    rel = (np.asarray(cube.center) - root.low) / side
    return tuple(root.low + (np.floor(rel) + 0.5) * side)


# ---------------------------------------------------------------- localized mixed check


def dyadic_maximal_values(f: np.ndarray, grid: Grid, R: Cube, w: Optional[np.ndarray] = None,
                          depth: Optional[int] = None) -> np.ndarray:
    """Weighted dyadic maximal function of |f| over D(R) at all lattice points (nan outside R).

    Uses the partition property: every lattice point of R lies in exactly one
    cube per level, so each level is one pass of assignments.
    """
    ww = np.ones(grid.shape) if w is None else w
    af = np.abs(f)
    out = np.full(grid.shape, -np.inf)
    lo, hi = _bounds(grid, R)
    if any(a > b for a, b in zip(lo, hi)):
        raise LatticeError("cube outside lattice")
    layer = [R]
    level = 0
    while layer:
        nxt = []
        for c in layer:
            clo, chi = _bounds(grid, c)
            if any(a > b for a, b in zip(clo, chi)):
                continue
            sl = _slices(clo, chi)
            wm = np.sum(ww[sl])
            if not wm > 0:
                raise DyadicError("weight vanishes on a dyadic cube")
            val = np.sum(af[sl] * ww[sl]) / wm
            np.maximum(out[sl], val, out=out[sl])
            npts = int(np.prod([b - a + 1 for a, b in zip(clo, chi)]))
            if npts > 1 and (depth is None or level < depth):
                nxt.extend(dyadic_children(c))
        layer = nxt
        level += 1
    out[~np.isfinite(out)] = np.nan
    return out


@dataclass
class SweepRecord:
    rows: list
    sup_ratio: float
    refinement_drift: float = float("nan")
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "sup_ratio": self.sup_ratio,
            "refinement_drift": self.refinement_drift,
            "meta": self.meta,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "lhs", "rhs", "ratio"])
            for r in self.rows:
                w.writerow([repr(r["t"]), repr(r["lhs"]), repr(r["rhs"]), repr(r["ratio"])])


def localized_mixed_check(f: LatticeField, R: Cube, u: Optional[LatticeField], v: Optional[LatticeField],
                          t_ladder: Sequence[float], check_i3: bool = True) -> SweepRecord:
    """Level sets of M^D_R(f v)/v measured by u v dx, with ratio t * uv(level) / int_R f u v.

    With check_i3 the decomposition of f with respect to u v dx is built at
    each level t above the uv-average and the u-weighted dyadic maximal of
    h v is evaluated off the selected cubes; it must vanish there.
    """
    grid = f.grid
    fs = np.abs(f.samples)
    us = np.ones(grid.shape) if u is None else u.require_weight("u").samples
    vs = np.ones(grid.shape) if v is None else v.require_weight("v").samples
    lo, hi = _bounds(grid, R)
    inR = np.zeros(grid.shape, dtype=bool)
    inR[_slices(lo, hi)] = True
    g = dyadic_maximal_values(fs * vs, grid, R) / vs
    uv = us * vs
    cell = grid.cell_volume
    rhs = float(np.sum(fs[inR] * uv[inR]) * cell)
    uvf = LatticeField(grid, uv)
    fuv_avg = float(np.sum(fs[inR] * uv[inR]) / np.sum(uv[inR]))
    rows = []
    i3_max = 0.0
    for t in t_ladder:
        level = inR & (g > t)
        lhs = float(np.sum(uv[level]) * cell)
        ratio = t * lhs / rhs if rhs > 0 else 0.0
        rows.append({"t": float(t), "lhs": lhs, "rhs": rhs, "ratio": ratio})
        if check_i3 and rhs > 0 and t > fuv_avg:
            cz = cz_decompose(LatticeField(grid, fs), R, uvf, t)
            hv = cz.bad_total() * vs
            out_mask = inR & ~cz.selected_mask()
            if out_mask.any():
                # signed u-weighted averages of h v: dyadic sup of |avg|
                m = _signed_dyadic_sup(hv, grid, R, us)
                # relative to f v: h v itself may be pure rounding when every P_i is a point
                scale = float(np.max(fs[inR] * vs[inR])) or 1.0
                i3_max = max(i3_max, float(np.nanmax(m[out_mask])) / scale)
    sup = max((r["ratio"] for r in rows), default=0.0)
    return SweepRecord(rows, sup, meta={"i3_max_relative": i3_max})


def _signed_dyadic_sup(values: np.ndarray, grid: Grid, R: Cube, w: np.ndarray) -> np.ndarray:
    """sup over dyadic Q in D(R) containing x of |(1/w(Q)) sum_Q values * w|."""
    out = np.full(grid.shape, -np.inf)
    layer = [R]
    while layer:
        nxt = []
        for c in layer:
            clo, chi = _bounds(grid, c)
            if any(a > b for a, b in zip(clo, chi)):
                continue
            sl = _slices(clo, chi)
            val = abs(np.sum(values[sl] * w[sl])) / np.sum(w[sl])
            np.maximum(out[sl], val, out=out[sl])
            if int(np.prod([b - a + 1 for a, b in zip(clo, chi)])) > 1:
                nxt.extend(dyadic_children(c))
        layer = nxt
    out[~np.isfinite(out)] = np.nan
    return out
