"""Critical radius functions.

A critical radius function rho > 0 controls its own variation:

    rho(x) / C0 * (1 + |x-y|/rho(x))^(-N0) <= rho(y) <= C0 rho(x) (1 + |x-y|/rho(x))^(N0/(N0+1)).

This module builds such functions (closed forms and the sup formula from a
nonnegative potential in d = 3), fits (C0, N0) on sampled pairs, estimates
reverse Holder constants of potentials and produces greedy critical
coverings with their overlap profile.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .lattice import Cube, CubeFamily, FamilyIndex, Grid, LatticeError, LatticeField

N0_LADDER = (1, 2, 4, 8)
SIGMA_LADDER = (1, 2, 4, 8)


class RadiusError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CriticalRadiusField:
    """Vectorized evaluator: (n, d) array of points -> (n,) array of radii."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    claimed_C0: Optional[float] = None
    claimed_N0: Optional[float] = None

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.asarray(self.evaluator(pts), dtype=float).reshape(pts.shape[0])

    def at(self, x: Sequence[float]) -> float:
        return float(self(np.asarray(x, dtype=float)[None, :])[0])

    def on(self, grid: Grid) -> LatticeField:
        return LatticeField(grid, self(grid.points()).reshape(grid.shape))


def constant_rho(c: float = 1.0) -> CriticalRadiusField:
    return CriticalRadiusField(lambda p: np.full(p.shape[0], float(c)), f"constant({c})", 1.0, 1.0)


def harmonic_rho(scale: float = 1.0) -> CriticalRadiusField:
    """rho(x) = scale / (1 + |x|), the radius attached to V = |x|^2 up to constants."""
    return CriticalRadiusField(
        lambda p: scale / (1.0 + np.linalg.norm(p, axis=1)), f"harmonic({scale})"
    )


def exp_square_rho() -> CriticalRadiusField:
    """rho(x) = exp(|x|^2): grows too fast to be a critical radius function."""
    return CriticalRadiusField(lambda p: np.exp(np.sum(p * p, axis=1)), "exp-square")


def scale_rho(rho: CriticalRadiusField, gamma: float) -> CriticalRadiusField:
    if gamma <= 0:
        raise RadiusError("scale factor must be positive")
    if gamma == 1:
        return rho
    return CriticalRadiusField(
        lambda p: gamma * rho(p), f"{gamma}*{rho.name}", rho.claimed_C0, rho.claimed_N0
    )


# ---------------------------------------------------------------- variation


@dataclass
class VariationReport:
    C0_fit: float
    N0_fit: float
    worst_pair: tuple
    satisfied: bool
    holds_on_samples: bool
    C0_by_N0: dict
    C0_inner_box: float
    growth: float
    n_pairs: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["C0_by_N0"] = {str(k): v for k, v in self.C0_by_N0.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def sample_pairs(low, high, grid_n: int = 24, n_random: int = 10_000, seed: int = 0):
    """Grid x grid pairs plus seeded uniform random pairs in the box."""
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    d = low.size
    per_axis = max(2, int(round(grid_n ** (1.0 / d))) if d > 1 else grid_n)
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(low, high)]
    g = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    i, j = np.meshgrid(np.arange(len(g)), np.arange(len(g)), indexing="ij")
    X = [g[i.ravel()]]
    Y = [g[j.ravel()]]
    rng = np.random.default_rng(seed)
    X.append(rng.uniform(low, high, size=(n_random, d)))
    Y.append(rng.uniform(low, high, size=(n_random, d)))
    return np.vstack(X), np.vstack(Y)


def required_C0(rx: np.ndarray, ry: np.ndarray, dist: np.ndarray, N0: float) -> np.ndarray:
    """Per-pair smallest C0 satisfying both sides of the variation bound."""
    t = 1.0 + dist / rx
    lower = rx * t ** (-N0) / ry
    upper = ry / (rx * t ** (N0 / (N0 + 1.0)))
    return np.maximum(np.maximum(lower, upper), 1.0)


def _fit(rho: CriticalRadiusField, X, Y, ladder):
    rx = rho(X)
    ry = rho(Y)
    if np.any(~np.isfinite(rx)) or np.any(rx <= 0) or np.any(~np.isfinite(ry)) or np.any(ry <= 0):
        raise RadiusError("rho must be positive and finite at every sample")
    dist = np.linalg.norm(X - Y, axis=1)
    table = {}
    worst = {}
    for N0 in ladder:
        req = required_C0(rx, ry, dist, N0)
        k = int(np.argmax(req))
        table[N0] = float(req[k])
        worst[N0] = k
    return table, worst


def verify_variation(
    rho: CriticalRadiusField,
    low,
    high,
    grid_n: int = 24,
    n_random: int = 10_000,
    seed: int = 0,
    ladder: Sequence[float] = N0_LADDER,
    growth_limit: float = 10.0,
) -> VariationReport:
    """Fit (C0, N0) on sampled pairs and decide whether the fit is trustworthy.

    On a bounded box the fitted C0 is always a finite maximum, so finiteness
    alone cannot falsify anything.  The fit is declared satisfied when C0 is
    finite and does not grow by more than `growth_limit` between the box
    shrunk by half around its center and the full box.
    """
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    X, Y = sample_pairs(low, high, grid_n, n_random, seed)
    if X.shape[0] < 1000:
        raise RadiusError("need at least 1000 sampled pairs")
    table, worst = _fit(rho, X, Y, ladder)
    C0 = min(table.values())
    best = min(n for n in ladder if table[n] <= C0 * (1 + 1e-12))
    k = worst[best]
    # verify the two inequalities with the fitted pair
    rx, ry = rho(X), rho(Y)
    dist = np.linalg.norm(X - Y, axis=1)
    t = 1.0 + dist / rx
    slack = 1e-12
    holds = bool(
        np.all(ry >= rx * t ** (-best) / C0 * (1 - slack))
        and np.all(ry <= C0 * rx * t ** (best / (best + 1.0)) * (1 + slack))
    )
    mid = (low + high) / 2
    half = (high - low) / 4
    Xi, Yi = sample_pairs(mid - half, mid + half, grid_n, n_random, seed)
    inner, _ = _fit(rho, Xi, Yi, [best])
    growth = C0 / inner[best]
    satisfied = bool(math.isfinite(C0) and holds and growth <= growth_limit)
    return VariationReport(
        C0_fit=C0,
        N0_fit=float(best),
        worst_pair=(X[k].tolist(), Y[k].tolist()),
        satisfied=satisfied,
        holds_on_samples=holds,
        C0_by_N0={float(n): v for n, v in table.items()},
        C0_inner_box=inner[best],
        growth=float(growth),
        n_pairs=int(X.shape[0]),
    )


def comparability_bounds(C0: float, N0: float):
    """Range of rho(y)/rho(x0) for y in the critical cube Q(x0, rho(x0)).

    Points of that cube are within distance rho(x0) of x0 (the radius is the
    half-diagonal), so 1 + |x0 - y|/rho(x0) <= 2.
    """
    return 1.0 / (C0 * 2.0 ** N0), C0 * 2.0 ** (N0 / (N0 + 1.0))


# ---------------------------------------------------------------- potentials


class BallQuadrature:
    """Product rule on balls in R^3: Gauss-Legendre in radius and polar angle,
    uniform in azimuth.  Exact for polynomials of moderate degree."""

    def __init__(self, n_radial: int = 24, n_polar: int = 24, n_azimuth: int = 48):
        t, wt = np.polynomial.legendre.leggauss(n_radial)
        self.radial = (t + 1) / 2
        self.radial_w = wt / 2 * self.radial ** 2
        c, wc = np.polynomial.legendre.leggauss(n_polar)
        phi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
        s = np.sqrt(1 - c ** 2)
        dirs = np.stack(
            [np.outer(s, np.cos(phi)).ravel(), np.outer(s, np.sin(phi)).ravel(), np.repeat(c, n_azimuth)],
            axis=1,
        )
        self.dirs = dirs
        self.dir_w = np.repeat(wc, n_azimuth) * (2 * np.pi / n_azimuth)

    def integrate(self, V: Callable[[np.ndarray], np.ndarray], x: np.ndarray, r: float) -> float:
        nodes = x[None, None, :] + r * self.radial[:, None, None] * self.dirs[None, :, :]
        vals = np.asarray(V(nodes.reshape(-1, 3)), dtype=float).reshape(self.radial.size, -1)
        return float(r ** 3 * (self.radial_w @ vals @ self.dir_w))


def shen_functional(V, x, r: float, quad: Optional[BallQuadrature] = None) -> float:
    """F(r) = r^(2-d) times the integral of V over B(x, r), d = 3."""
    quad = quad or BallQuadrature()
    return quad.integrate(V, np.asarray(x, dtype=float), r) / r


def shen_rho(
    V: Callable[[np.ndarray], np.ndarray],
    x: Sequence[float],
    d: int = 3,
    quad: Optional[BallQuadrature] = None,
    r_min: float = 1e-3,
    r_max: float = 1e3,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> float:
    """sup{r > 0 : r^(2-d) * integral of V over B(x, r) <= 1} by bisection."""
    if d != 3:
        raise RadiusError("the potential-based radius is implemented for d = 3")
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise RadiusError("x must be a point of R^3")
    quad = quad or BallQuadrature()
    F = lambda r: shen_functional(V, x, r, quad)
    f_lo, f_hi = F(r_min), F(r_max)
    if not (f_lo <= 1.0 <= f_hi):
        raise RadiusError("bracket exhausted")
    radii = np.geomspace(r_min, r_max, 16)
    vals = np.array([F(r) for r in radii])
    if np.any(np.diff(vals) < -1e-12 * np.abs(vals[1:])):
        warnings.warn("F(r) is not monotone on the spot-check radii", RuntimeWarning)
    lo, hi = r_min, r_max
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi) if hi / lo > 4 else (lo + hi) / 2
        fm = F(mid)
        if fm <= 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return lo


def shen_field(V, quad: Optional[BallQuadrature] = None, r_min: float = 1e-3, r_max: float = 1e3) -> CriticalRadiusField:
    quad = quad or BallQuadrature()

    def ev(pts):
        return np.array([shen_rho(V, p, 3, quad, r_min, r_max) for p in pts])

    return CriticalRadiusField(ev, "shen")


def reverse_holder_constant(V: LatticeField, q: float, family: CubeFamily) -> float:
    """sup over the family of (avg V^q)^(1/q) / avg V."""
    if q <= 1:
        raise RadiusError("q must exceed 1")
    s = V.samples
    if np.any(s < 0):
        raise RadiusError("potential must be nonnegative")
    top = float(s.max())
    if top == 0:
        raise RadiusError("degenerate potential on cube")
    s = s / top
    idx = FamilyIndex(V.grid, family)
    if not idx.nonempty.all():
        raise LatticeError("cube outside lattice")
    a1 = idx.sums(s) / idx.counts
    if np.any(a1 <= 0):
        raise RadiusError("degenerate potential on cube")
    aq = idx.sums(s ** q) / idx.counts
    return float(np.max(aq ** (1.0 / q) / a1))


# ---------------------------------------------------------------- covering


@dataclass
class CoveringReport:
    centers: list
    radii: list
    max_overlap: dict
    N1_fit: float
    covered: bool

    @property
    def cubes(self) -> list:
        return [Cube(tuple(c), r) for c, r in zip(self.centers, self.radii)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_overlap"] = {str(k): v for k, v in self.max_overlap.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _in_cube(pts: np.ndarray, center: np.ndarray, half_side: float) -> np.ndarray:
    return np.all(np.abs(pts - center) <= half_side * (1 + 1e-12), axis=1)


def critical_covering(rho: CriticalRadiusField, grid: Grid, sigmas: Sequence[float] = SIGMA_LADDER) -> CoveringReport:
    """Greedy critical covering in lexicographic lattice order.

    A lattice point becomes a new center when it is not yet covered by the
    closed cubes Q(x_j, rho(x_j)) already chosen.
    """
    pts = grid.points()
    rr = rho(pts)
    if np.any(rr < grid.h):
        raise RadiusError("lattice too coarse for rho")
    d = grid.dim
    covered = np.zeros(pts.shape[0], dtype=bool)
    chosen = []
    for i in range(pts.shape[0]):
        if covered[i]:
            continue
        chosen.append(i)
        covered |= _in_cube(pts, pts[i], rr[i] / math.sqrt(d))
    centers = pts[chosen]
    radii = rr[chosen]
    overlap = {}
    for s in sigmas:
        count = np.zeros(pts.shape[0], dtype=np.int64)
        for c, r in zip(centers, radii):
            count += _in_cube(pts, c, s * r / math.sqrt(d))
        overlap[float(s)] = int(count.max())
    sig = np.log(np.array(list(overlap.keys())))
    ov = np.log(np.array(list(overlap.values()), dtype=float))
    slope = float(np.polyfit(sig, ov, 1)[0]) if len(sig) > 1 else 0.0
    return CoveringReport(
        centers=centers.tolist(),
        radii=radii.tolist(),
        max_overlap=overlap,
        N1_fit=slope,
        covered=bool(covered.all()),
    )
