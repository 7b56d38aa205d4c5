"""Discrete geometry and quadrature on uniform lattices.

Cubes are axis-parallel and described by a center and a radius r, with
side length 2r/sqrt(d).  Functions and weights live on uniform lattices
over closed boxes; every integral is a midpoint sum over lattice points.

Point membership convention (used everywhere in the package): a lattice
point x belongs to the cube with nominal edges [a_i, b_i] when, on every
axis, a_i < x_i <= b_i.  On a shared face the point therefore goes to the
cube with the lexicographically smaller center, so dyadic children
partition the points of their parent.  The lower face is closed when it
reaches the lower boundary of the box, otherwise those boundary points
would belong to no cube at all.  Cubes sticking out of the box are clipped
for quadrature but keep their nominal radius.
"""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

# relative fuzz (in units of h) used when comparing coordinates with cube faces
FACE_TOL = 1e-9

FORMAT_HEADER = "# rholab lattice-field v1"

SCHEMES = ("exhaustive-lattice", "dyadic-of", "subcritical", "custom")


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Cube:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        if not 1 <= len(c) <= 3:
            raise LatticeError("cube dimension must be 1, 2 or 3")
        if not all(math.isfinite(v) for v in c):
            raise LatticeError("cube center must be finite")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise LatticeError("cube radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def from_corner(cls, low: Sequence[float], side: float) -> "Cube":
        low = np.atleast_1d(np.asarray(low, dtype=float))
        d = low.size
        return cls(tuple(low + side / 2), side * math.sqrt(d) / 2)

    @classmethod
    def from_edges(cls, low: Sequence[float], high: Sequence[float]) -> "Cube":
        low = np.atleast_1d(np.asarray(low, dtype=float))
        high = np.atleast_1d(np.asarray(high, dtype=float))
        sides = high - low
        if not np.allclose(sides, sides[0], rtol=1e-12, atol=0):
            raise LatticeError("edges do not describe a cube")
        return cls.from_corner(low, float(sides[0]))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def side(self) -> float:
        return 2 * self.radius / math.sqrt(self.dim)

    @property
    def half_side(self) -> float:
        return self.radius / math.sqrt(self.dim)

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.center) - self.half_side

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.center) + self.half_side

    @property
    def volume(self) -> float:
        return self.side ** self.dim

    def contains_cube(self, other: "Cube", tol: float = 1e-12) -> bool:
        """Closed containment of `other` in self, with absolute fuzz tol*side."""
        eps = tol * max(self.side, other.side)
        return bool(np.all(other.low >= self.low - eps) and np.all(other.high <= self.high + eps))

    def contains_point(self, x: Sequence[float]) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.low) and np.all(x <= self.high))


def dilate(Q: Cube, lam: float) -> Cube:
    if lam <= 0:
        raise LatticeError("dilation factor must be positive")
    return Cube(Q.center, Q.radius * lam)


def dyadic_children(Q: Cube) -> list:
    """The 2^d half-side cubes tiling Q, in lexicographic order of centers."""
    q = Q.half_side / 2
    c = np.asarray(Q.center)
    out = []
    for signs in itertools.product((-1.0, 1.0), repeat=Q.dim):
        out.append(Cube(tuple(c + q * np.asarray(signs)), Q.radius / 2))
    return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Geometry of a uniform lattice over the closed box [low, high]."""

    low: np.ndarray
    high: np.ndarray
    h: float

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.low, dtype=float)).copy()
        high = np.atleast_1d(np.asarray(self.high, dtype=float)).copy()
        if low.shape != high.shape or not 1 <= low.size <= 3:
            raise LatticeError("box must have dimension 1, 2 or 3")
        if not (self.h > 0) or np.any(high < low):
            raise LatticeError("invalid box or spacing")
        low.flags.writeable = False
        high.flags.writeable = False
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "h", float(self.h))

    @property
    def dim(self) -> int:
        return self.low.size

    @property
    def shape(self) -> tuple:
        return tuple(int(round((hi - lo) / self.h)) + 1 for lo, hi in zip(self.low, self.high))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.low[axis] + self.h * np.arange(self.shape[axis])

    def points(self) -> np.ndarray:
        """All lattice points as an (n, d) array in row-major (lexicographic) order."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def index_bounds(self, lows: np.ndarray, highs: np.ndarray):
        """Inclusive index ranges of the lattice points inside boxes [lows, highs].

        lows, highs have shape (m, d).  Returns integer arrays (lo, hi) of the
        same shape; a cube is empty on an axis when lo > hi there.
        """
        lows = np.atleast_2d(lows)
        highs = np.atleast_2d(highs)
        rel_lo = (lows - self.low) / self.h
        rel_hi = (highs - self.low) / self.h
        lo = np.floor(rel_lo + FACE_TOL).astype(np.int64) + 1
        lo = np.where(rel_lo <= FACE_TOL, 0, lo)
        hi = np.floor(rel_hi + FACE_TOL).astype(np.int64)
        n = np.asarray(self.shape)
        hi = np.minimum(hi, n - 1)
        lo = np.maximum(lo, 0)
        return lo, hi

    def cube_bounds(self, Q: Cube):
        lo, hi = self.index_bounds(Q.low[None, :], Q.high[None, :])
        return lo[0], hi[0]

    def membership_mask(self, Q: Cube) -> np.ndarray:
        """Boolean array (lattice shape) of the points assigned to Q."""
        lo, hi = self.cube_bounds(Q)
        mask = np.zeros(self.shape, dtype=bool)
        if np.all(lo <= hi):
            mask[tuple(slice(a, b + 1) for a, b in zip(lo, hi))] = True
        return mask

    def same_as(self, other: "Grid") -> bool:
        return (
            self.h == other.h
            and np.array_equal(self.low, other.low)
            and np.array_equal(self.high, other.high)
        )

    def box_cube(self) -> Cube:
        """The box itself as a cube (only valid when the box is a cube)."""
        return Cube.from_edges(self.low, self.high)


@dataclass(frozen=True, eq=False)
class LatticeField:
    grid: Grid
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float, copy=True)
        if s.shape != self.grid.shape:
            s = s.reshape(self.grid.shape)
        if not np.all(np.isfinite(s)):
            raise LatticeError("non-finite sample in lattice field")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    # spec-facing aliases
    @property
    def box(self):
        return self.grid.low, self.grid.high

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def shape(self) -> tuple:
        return self.grid.shape

    def flat(self) -> np.ndarray:
        return self.samples.ravel()

    def with_samples(self, samples) -> "LatticeField":
        return LatticeField(self.grid, np.asarray(samples, dtype=float).reshape(self.grid.shape))

    def is_weight(self) -> bool:
        return bool(np.all(self.samples > 0))

    def require_weight(self, name: str = "weight") -> "LatticeField":
        if not self.is_weight():
            raise LatticeError(f"{name} must be strictly positive on the lattice")
        return self

    def __mul__(self, other):
        if isinstance(other, LatticeField):
            _check_same(self, other)
            return self.with_samples(self.samples * other.samples)
        return self.with_samples(self.samples * float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, LatticeField):
            _check_same(self, other)
            return self.with_samples(self.samples + other.samples)
        return self.with_samples(self.samples + float(other))

    def __pow__(self, a: float):
        return self.with_samples(self.samples ** a)

    @classmethod
    def from_function(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        low,
        high,
        h: float,
        offset: bool = False,
    ) -> "LatticeField":
        """Sample fn (vectorized over an (n, d) array of points) on a lattice.

        With offset=True the points are the cell midpoints low + (i + 1/2) h,
        which keeps them away from singularities placed on the half-lattice
        (for instance at the origin of a symmetric box).
        """
        grid = make_grid(low, high, h, offset=offset)
        vals = np.asarray(fn(grid.points()), dtype=float).reshape(grid.shape)
        return cls(grid, vals)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "LatticeField":
        return cls(grid, np.full(grid.shape, float(c)))


def _check_same(a: LatticeField, b: LatticeField):
    if not a.grid.same_as(b.grid):
        raise LatticeError("fields live on different lattices")


def make_grid(low, high, h: float, offset: bool = False) -> Grid:
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    if offset:
        return Grid(low + h / 2, high - h / 2, h)
    return Grid(low, high, h)


# ---------------------------------------------------------------- sums


class PrefixSums:
    """Summed-area table in extended precision for O(2^d) box sums."""

    def __init__(self, values: np.ndarray):
        v = np.asarray(values, dtype=np.longdouble)
        p = np.zeros(tuple(n + 1 for n in v.shape), dtype=np.longdouble)
        p[tuple(slice(1, None) for _ in v.shape)] = v
        for ax in range(v.ndim):
            np.cumsum(p, axis=ax, out=p)
        self.table = p
        self.ndim = v.ndim

    def box_sums(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Sums over inclusive index boxes; empty boxes give 0."""
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        empty = np.any(lo > hi, axis=1)
        hi_c = np.where(empty[:, None], lo - 1, hi)
        total = np.zeros(lo.shape[0], dtype=np.longdouble)
        for corner in itertools.product((0, 1), repeat=self.ndim):
            idx = []
            sign = 1
            for ax, c in enumerate(corner):
                if c:
                    idx.append(hi_c[:, ax] + 1)
                else:
                    idx.append(lo[:, ax])
                    sign = -sign
            total += sign * self.table[tuple(idx)]
        total[empty] = 0
        return total


def _normalize_sum(s: np.ndarray) -> np.ndarray:
    return np.asarray(s, dtype=np.float64)


# ---------------------------------------------------------------- families


@dataclass(frozen=True, eq=False)
class CubeFamily:
    centers: np.ndarray
    radii: np.ndarray
    descriptor: str = "custom"

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float)).copy()
        r = np.atleast_1d(np.asarray(self.radii, dtype=float)).copy()
        if c.shape[0] == 0:
            raise LatticeError("empty cube family")
        if c.shape[0] != r.shape[0]:
            raise LatticeError("centers and radii differ in length")
        if np.any(r <= 0):
            raise LatticeError("cube radii must be positive")
        c.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    def __len__(self) -> int:
        return self.radii.size

    def __getitem__(self, k: int) -> Cube:
        return Cube(tuple(self.centers[k]), float(self.radii[k]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def half_sides(self) -> np.ndarray:
        return self.radii / math.sqrt(self.dim)

    @property
    def lows(self) -> np.ndarray:
        return self.centers - self.half_sides[:, None]

    @property
    def highs(self) -> np.ndarray:
        return self.centers + self.half_sides[:, None]

    def subset(self, mask: np.ndarray, descriptor: Optional[str] = None) -> "CubeFamily":
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise LatticeError("empty cube family")
        return CubeFamily(self.centers[mask], self.radii[mask], descriptor or self.descriptor)

    def concat(self, other: "CubeFamily", descriptor: str = "custom") -> "CubeFamily":
        return CubeFamily(
            np.vstack([self.centers, other.centers]),
            np.concatenate([self.radii, other.radii]),
            descriptor,
        )

    def inside(self, R: Cube, tol: float = 1e-12) -> np.ndarray:
        """Mask of the cubes contained (closed) in R."""
        eps = tol * R.side
        return np.all(self.lows >= R.low - eps, axis=1) & np.all(self.highs <= R.high + eps, axis=1)

    @classmethod
    def from_cubes(cls, cubes: Iterable[Cube], descriptor: str = "custom") -> "CubeFamily":
        cubes = list(cubes)
        if not cubes:
            raise LatticeError("empty cube family")
        return cls(np.array([q.center for q in cubes]), np.array([q.radius for q in cubes]), descriptor)


def radius_ladder(grid: Grid, levels: Optional[int] = None) -> np.ndarray:
    """Radii sqrt(d) * h * 2^j for j = -1, 0, 1, ...

    j = -1 is the singleton-scale cube (side h: exactly one lattice point).
    By default the ladder stops at the first cube whose half-side covers the
    whole box from any center.
    """
    d = grid.dim
    if levels is None:
        extent = max(float(np.max(grid.high - grid.low)), grid.h)
        top = 0
        while grid.h * 2 ** top < extent:
            top += 1
        levels = top + 2
    return math.sqrt(d) * grid.h * 2.0 ** np.arange(-1, levels - 1)


def exhaustive_family(grid: Grid, radii: Optional[Sequence[float]] = None, levels: Optional[int] = None,
                      region: Optional[Cube] = None) -> CubeFamily:
    """All cubes centered at lattice points with radii from a ladder.

    Ordered by radius, then by center in lexicographic order.  With a region,
    only the lattice points of that cube serve as centers.
    """
    if radii is None:
        radii = radius_ladder(grid, levels)
    radii = np.asarray(sorted(float(r) for r in radii))
    pts = grid.points()
    if region is not None:
        pts = pts[grid.membership_mask(region).ravel()]
        if pts.shape[0] == 0:
            raise LatticeError("cube outside lattice")
    centers = np.tile(pts, (radii.size, 1))
    rr = np.repeat(radii, pts.shape[0])
    return CubeFamily(centers, rr, "exhaustive-lattice")


def dyadic_family(R: Cube, depth: int) -> CubeFamily:
    """All dyadic subcubes of R down to the given depth (1 + 2^d + ... cubes)."""
    if depth < 0:
        raise LatticeError("depth must be nonnegative")
    d = R.dim
    centers = []
    radii = []
    low = R.low
    for k in range(depth + 1):
        m = 2 ** k
        side = R.side / m
        idx = np.array(list(itertools.product(range(m), repeat=d)), dtype=float)
        centers.append(low + (idx + 0.5) * side)
        radii.append(np.full(idx.shape[0], R.radius / m))
    return CubeFamily(np.vstack(centers), np.concatenate(radii), "dyadic-of")


def subcritical_family(family: CubeFamily, rho, supercritical: bool = False) -> CubeFamily:
    """Cubes with r <= rho(center) (or the complement)."""
    sub = family_is_subcritical(family, rho)
    mask = ~sub if supercritical else sub
    return family.subset(mask, "subcritical" if not supercritical else "custom")


def family_is_subcritical(family: CubeFamily, rho) -> np.ndarray:
    rc = np.asarray(rho(family.centers), dtype=float)
    return family.radii <= rc * (1 + 1e-12)


def intersecting(family: CubeFamily, grid: Grid) -> CubeFamily:
    """Keep the cubes that contain at least one lattice point."""
    lo, hi = grid.index_bounds(family.lows, family.highs)
    return family.subset(np.all(lo <= hi, axis=1))


def enumerate_cubes(grid: Grid, scheme: str = "exhaustive-lattice", **kw) -> CubeFamily:
    """Build a deterministic cube family.

    scheme: "exhaustive-lattice" (radii=..., levels=...), "dyadic-of" (root=Cube,
    depth=int), "subcritical" (rho=..., plus the exhaustive options) or
    "custom" (cubes=[...]).  Cubes meeting no lattice point are dropped.
    """
    if scheme == "exhaustive-lattice":
        fam = exhaustive_family(grid, kw.get("radii"), kw.get("levels"))
    elif scheme == "dyadic-of":
        fam = dyadic_family(kw["root"], int(kw.get("depth", 0)))
    elif scheme == "subcritical":
        fam = subcritical_family(exhaustive_family(grid, kw.get("radii"), kw.get("levels")), kw["rho"])
    elif scheme == "custom":
        fam = CubeFamily.from_cubes(kw["cubes"])
    else:
        raise LatticeError(f"unknown scheme {scheme!r}")
    out = intersecting(fam, grid)
    return CubeFamily(out.centers, out.radii, scheme)


# ---------------------------------------------------------------- quadrature


SPARSE_TABLE_LIMIT = 256 * 2 ** 20


def _levels(n: int) -> int:
    return max(1, int(n).bit_length())


def _sparse_table_bytes(shape) -> int:
    total = 8
    for n in shape:
        total *= n * _levels(n)
    return total


def _axis_table(a: np.ndarray, axis: int, op) -> list:
    """table[j] holds op over windows of length 2^j starting at each index."""
    out = [a]
    n = a.shape[axis]
    j = 1
    while (1 << j) <= n:
        prev = out[-1]
        half = 1 << (j - 1)
        m = n - (1 << j) + 1
        a0 = np.take(prev, np.arange(m), axis=axis)
        a1 = np.take(prev, np.arange(half, half + m), axis=axis)
        out.append(op(a0, a1))
        j += 1
    return out


def _sparse_query(values: np.ndarray, lo: np.ndarray, hi: np.ndarray, how: str) -> np.ndarray:
    """Range min/max over inclusive index boxes using a sparse table (d <= 2)."""
    op = np.minimum if how == "min" else np.maximum
    lo = np.atleast_2d(lo)
    hi = np.atleast_2d(hi)
    length = hi - lo + 1
    lev = np.floor(np.log2(length)).astype(np.int64)
    # guard against log2 rounding at exact powers of two
    lev = np.where((1 << (lev + 1)) <= length, lev + 1, lev)
    lev = np.where((1 << lev) > length, lev - 1, lev)
    if values.ndim == 1:
        tab = _axis_table(values, 0, op)
        res = np.empty(lo.shape[0])
        for j in np.unique(lev[:, 0]):
            sel = lev[:, 0] == j
            t = tab[j]
            a = lo[sel, 0]
            b = hi[sel, 0] - (1 << j) + 1
            res[sel] = op(t[a], t[b])
        return res
    rows = _axis_table(values, 0, op)
    tabs = [_axis_table(r, 1, op) for r in rows]
    res = np.empty(lo.shape[0])
    keys = lev[:, 0] * 64 + lev[:, 1]
    for key in np.unique(keys):
        j0, j1 = divmod(int(key), 64)
        sel = keys == key
        t = tabs[j0][j1]
        a0, a1 = lo[sel, 0], lo[sel, 1]
        b0 = hi[sel, 0] - (1 << j0) + 1
        b1 = hi[sel, 1] - (1 << j1) + 1
        res[sel] = op(op(t[a0, a1], t[a0, b1]), op(t[b0, a1], t[b0, b1]))
    return res


class FamilyIndex:
    """Index ranges of a family on a grid, cached for repeated use."""

    def __init__(self, grid: Grid, family: CubeFamily):
        if family.dim != grid.dim:
            raise LatticeError("family and lattice dimensions differ")
        self.grid = grid
        self.family = family
        self.lo, self.hi = grid.index_bounds(family.lows, family.highs)
        self.nonempty = np.all(self.lo <= self.hi, axis=1)
        self.counts = np.where(self.nonempty, np.prod(self.hi - self.lo + 1, axis=1), 0)

    def sums(self, values: np.ndarray) -> np.ndarray:
        """Sums of `values` (lattice-shaped) over each cube, rounded to float64."""
        return _normalize_sum(PrefixSums(values).box_sums(self.lo, self.hi))

    def slices(self, k: int) -> tuple:
        return tuple(slice(a, b + 1) for a, b in zip(self.lo[k], self.hi[k]))

    def reduce(self, values: np.ndarray, how: str) -> np.ndarray:
        """Min or max of values over the points of each cube (nan if empty)."""
        if how not in ("min", "max"):
            raise ValueError("how must be 'min' or 'max'")
        values = np.asarray(values, dtype=float)
        out = np.full(len(self.family), np.nan)
        ks = np.flatnonzero(self.nonempty)
        if values.ndim <= 2 and _sparse_table_bytes(values.shape) <= SPARSE_TABLE_LIMIT:
            out[ks] = _sparse_query(values, self.lo[ks], self.hi[ks], how)
            return out
        fn = np.min if how == "min" else np.max
        for k in ks:
            out[k] = fn(values[self.slices(k)])
        return out

    def averages(self, f: np.ndarray, w: Optional[np.ndarray] = None) -> np.ndarray:
        if not self.nonempty.all():
            raise LatticeError("cube outside lattice")
        if w is None:
            return self.sums(f) / self.counts
        return self.sums(f * w) / self.sums(w)


def average(f: LatticeField, Q: Cube, w: Optional[LatticeField] = None) -> float:
    """Midpoint-rule average of f over Q, optionally with respect to w dx."""
    lo, hi = f.grid.cube_bounds(Q)
    if np.any(lo > hi):
        raise LatticeError("cube outside lattice")
    sl = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
    vals = f.samples[sl]
    if w is None:
        return float(np.sum(vals) / vals.size)
    _check_same(f, w)
    ww = w.samples[sl]
    if np.any(ww < 0) or not np.sum(ww) > 0:
        raise LatticeError("weight must be nonnegative with positive mass on the cube")
    return float(np.sum(vals * ww) / np.sum(ww))


Predicate = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


def measure(w: LatticeField, E: Predicate) -> float:
    """h^d times the sum of w over the lattice points satisfying E.

    E is either a boolean array of lattice shape or a callable mapping an
    (n, d) array of points to a boolean vector.
    """
    if callable(E):
        mask = np.asarray(E(w.grid.points()), dtype=bool).reshape(w.shape)
    else:
        mask = np.asarray(E, dtype=bool).reshape(w.shape)
    return float(np.sum(w.samples[mask]) * w.grid.cell_volume)


def integral(f: LatticeField) -> float:
    return float(np.sum(f.samples) * f.grid.cell_volume)


# ---------------------------------------------------------------- text format


def dumps_field(f: LatticeField) -> str:
    """Serialize a field; floats are written with repr, which round-trips exactly."""
    buf = io.StringIO()
    g = f.grid
    buf.write(FORMAT_HEADER + "\n")
    buf.write(f"dim {g.dim}\n")
    buf.write("low " + " ".join(repr(float(v)) for v in g.low) + "\n")
    buf.write("high " + " ".join(repr(float(v)) for v in g.high) + "\n")
    buf.write(f"h {g.h!r}\n")
    buf.write("shape " + " ".join(str(n) for n in g.shape) + "\n")
    buf.write("samples\n")
    for v in f.samples.ravel():
        buf.write(repr(float(v)) + "\n")
    buf.write("end\n")
    return buf.getvalue()


def loads_field(text: str) -> LatticeField:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != FORMAT_HEADER:
        raise LatticeError("not a lattice-field document")
    head = {}
    i = 1
    while i < len(lines) and lines[i] != "samples":
        key, _, rest = lines[i].partition(" ")
        head[key] = rest.split()
        i += 1
    try:
        dim = int(head["dim"][0])
        low = [float(v) for v in head["low"]]
        high = [float(v) for v in head["high"]]
        h = float(head["h"][0])
        shape = tuple(int(v) for v in head["shape"])
    except (KeyError, IndexError, ValueError) as exc:
        raise LatticeError(f"malformed header: {exc}") from None
    vals = lines[i + 1:]
    if not vals or vals[-1] != "end":
        raise LatticeError("missing end marker")
    vals = np.array([float(v) for v in vals[:-1]])
    grid = Grid(np.array(low), np.array(high), h)
    if len(low) != dim or grid.shape != shape or vals.size != grid.size:
        raise LatticeError("header and sample count disagree")
    return LatticeField(grid, vals.reshape(shape))


def save_field(f: LatticeField, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_field(f))


def load_field(path) -> LatticeField:
    with open(path, encoding="utf-8") as fh:
        return loads_field(fh.read())
