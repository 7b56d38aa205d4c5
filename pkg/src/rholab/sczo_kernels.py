"""Kernel conditions for rho-adapted singular integrals, checked on samples.

A kernel is a vectorized evaluator K(X, Y) -> values for paired rows of
X and Y.  Every check is a sup-over-samples fit: it returns the smallest
constant consistent with the sampled points, and a report passes when the
fit is finite and does not grow by STABLE_GROWTH or more when the sample
scales are extended by SCALE_EXTENSION.  That second run is the falsification
step: a kernel that only satisfies the bound on a bounded range of scales
shows up as a growing fit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .critical_radius import CriticalRadiusField, constant_rho, harmonic_rho
from .exponents import exponent_table  # noqa: F401  (re-exported)
from .lattice import FACE_TOL, LatticeField

STABLE_GROWTH = 1.5
SCALE_EXTENSION = 4.0
MIN_ANNULUS_POINTS = 8
PAIR_BUDGET = 4_000_000

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class KernelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KernelSpec:
    name: str
    evaluator: Evaluator
    dim: int
    s: float = math.inf
    delta: float = 1.0
    rho: Optional[CriticalRadiusField] = None
    params: dict = field(default_factory=dict)

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.asarray(self.evaluator(X, Y), dtype=float)

    def scaled(self, lam: float) -> "KernelSpec":
        ev = self.evaluator
        return KernelSpec(f"{lam:g}*{self.name}", lambda X, Y: lam * ev(X, Y), self.dim, self.s,
                          self.delta, self.rho, dict(self.params, scale=lam))


# ---------------------------------------------------------------- registry

KERNELS: Dict[str, Callable[..., KernelSpec]] = {}


def register_kernel(name: str):
    """Decorator registering a kernel factory under a config name."""
    def deco(factory):
        KERNELS[name] = factory
        return factory
    return deco


def build_kernel(name: str, **params) -> KernelSpec:
    if name not in KERNELS:
        raise KernelError(f"unknown kernel {name!r}; known: {sorted(KERNELS)}")
    return KERNELS[name](**params)


def _dist(X, Y):
    return np.linalg.norm(X - Y, axis=1)


def _rho_or_default(rho):
    return rho if rho is not None else harmonic_rho()


@register_kernel("surrogate")
def surrogate_kernel(dim: int = 1, N0: float = 4.0, delta: float = 1.0, s: float = math.inf,
                     rho: Optional[CriticalRadiusField] = None) -> KernelSpec:
    """omega((x-y)/|x-y|) |x-y|^-d (1 + |x-y|/rho(x))^-N0 with omega(z) = z_1."""
    rho = _rho_or_default(rho)

    def ev(X, Y):
        z = X - Y
        r = np.linalg.norm(z, axis=1)
        return (z[:, 0] / r) * r ** (-dim) * (1.0 + r / rho(X)) ** (-N0)

    return KernelSpec("surrogate", ev, dim, s, delta, rho, {"N0": N0})


@register_kernel("decay-homogeneous")
def decay_homogeneous_kernel(dim: int = 1, N0: float = 4.0, rho: Optional[CriticalRadiusField] = None,
                             s: float = math.inf) -> KernelSpec:
    """|x-y|^-d (1 + |x-y|/rho(x))^-N0 (size fit exactly 1 at N = N0)."""
    rho = _rho_or_default(rho)

    def ev(X, Y):
        r = _dist(X, Y)
        return r ** (-dim) * (1.0 + r / rho(X)) ** (-N0)

    return KernelSpec("decay-homogeneous", ev, dim, s, 1.0, rho, {"N0": N0})


@register_kernel("homogeneous")
def homogeneous_kernel(dim: int = 1, rho: Optional[CriticalRadiusField] = None, s: float = math.inf) -> KernelSpec:
    """|x-y|^-d."""
    return KernelSpec("homogeneous", lambda X, Y: _dist(X, Y) ** (-dim), dim, s, 1.0,
                      rho if rho is not None else constant_rho(1e6))


@register_kernel("riesz")
def riesz_kernel(dim: int = 1, rho: Optional[CriticalRadiusField] = None) -> KernelSpec:
    """(x_1 - y_1) / |x-y|^(d+1); in 1-d this is the Hilbert kernel 1/(x-y)."""
    def ev(X, Y):
        z = X - Y
        return z[:, 0] / np.linalg.norm(z, axis=1) ** (dim + 1)
    return KernelSpec("riesz", ev, dim, math.inf, 1.0, rho if rho is not None else constant_rho(1e6))


@register_kernel("gaussian")
def gaussian_kernel(dim: int = 1, rho: Optional[CriticalRadiusField] = None) -> KernelSpec:
    """exp(-|x-y|^2)."""
    return KernelSpec("gaussian", lambda X, Y: np.exp(-_dist(X, Y) ** 2), dim, 2.0, 1.0,
                      rho if rho is not None else constant_rho(1e6))


@register_kernel("x-only")
def x_only_kernel(dim: int = 1, rho: Optional[CriticalRadiusField] = None) -> KernelSpec:
    """A kernel depending on x alone: 1 + x_1^2."""
    return KernelSpec("x-only", lambda X, Y: 1.0 + X[:, 0] ** 2, dim, 2.0, 1.0,
                      rho if rho is not None else constant_rho(1e6))


@register_kernel("zero")
def zero_kernel(dim: int = 1, rho: Optional[CriticalRadiusField] = None) -> KernelSpec:
    return KernelSpec("zero", lambda X, Y: np.zeros(X.shape[0]), dim, math.inf, 1.0,
                      rho if rho is not None else constant_rho(1e6))


# ---------------------------------------------------------------- reports


@dataclass
class ConditionReport:
    condition: str
    kernel: str
    fits: Dict[float, float]  # N (or delta for smoothness) -> fitted constant
    requested: float
    passed: bool
    growth: float  # fit on extended scales / fit on base scales, at the requested key
    witness: dict
    n_samples: int
    skipped: int = 0
    per_scale: Dict[float, float] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.fits[self.requested]

    @property
    def drift(self) -> float:
        """max/min of the per-scale fits (nan when fewer than two scales)."""
        vals = [v for v in self.per_scale.values() if v > 0]
        return max(vals) / min(vals) if len(vals) > 1 else math.nan

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "kernel": self.kernel,
            "fits": {str(k): _jnum(v) for k, v in self.fits.items()},
            "requested": self.requested,
            "passed": self.passed,
            "growth": _jnum(self.growth),
            "witness": self.witness,
            "n_samples": self.n_samples,
            "skipped": self.skipped,
            "per_scale": {str(k): _jnum(v) for k, v in self.per_scale.items()},
        }

    def to_text(self) -> str:
        lines = [f"condition {self.condition}", f"kernel {self.kernel}"]
        for k, v in self.fits.items():
            lines.append(f"fit {k:g} {v!r}")
        lines += [f"requested {self.requested:g}", f"growth {self.growth!r}",
                  f"samples {self.n_samples}", f"skipped {self.skipped}",
                  f"passed {str(self.passed).lower()}"]
        return "\n".join(lines) + "\n"


def _jnum(x):
    return x if math.isfinite(x) else str(x)


def _growth(base: float, ext: float) -> float:
    if base == 0:
        return 1.0 if ext == 0 else math.inf
    return ext / base


def _judge(base: float, ext: float) -> tuple:
    g = _growth(base, ext)
    return bool(math.isfinite(base) and math.isfinite(ext) and g < STABLE_GROWTH), g


# ---------------------------------------------------------------- samplers


@dataclass(frozen=True)
class SampleSpec:
    """Seeded random samples inside a box, with log-uniform separations."""
    low: Sequence[float] = (-4.0,)
    high: Sequence[float] = (4.0,)
    n: int = 4000
    seed: int = 0
    min_sep: float = 1e-3
    max_sep: Optional[float] = None  # default: box diameter

    @property
    def dim(self) -> int:
        return len(self.low)

    def diameter(self) -> float:
        return float(np.linalg.norm(np.asarray(self.high) - np.asarray(self.low)))

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def points(self, rng, n) -> np.ndarray:
        lo, hi = np.asarray(self.low, float), np.asarray(self.high, float)
        return lo + (hi - lo) * rng.random((n, self.dim))

    def directions(self, rng, n) -> np.ndarray:
        v = rng.standard_normal((n, self.dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def separations(self, rng, n, stretch: float = 1.0) -> np.ndarray:
        top = (self.max_sep or self.diameter()) * stretch
        return np.exp(rng.uniform(math.log(self.min_sep), math.log(top), n))


def pointwise_pairs(spec: SampleSpec, stretch: float = 1.0):
    rng = spec.rng(1)
    X = spec.points(rng, spec.n)
    Y = X + spec.separations(rng, spec.n, stretch)[:, None] * spec.directions(rng, spec.n)
    return X, Y


def smoothness_triples(spec: SampleSpec, stretch: float = 1.0):
    """(x, y, y0) with |y - y0| a fraction in [1e-3, 0.45] of |x - y0|."""
    rng = spec.rng(2)
    X = spec.points(rng, spec.n)
    Y0 = X + spec.separations(rng, spec.n, stretch)[:, None] * spec.directions(rng, spec.n)
    frac = np.exp(rng.uniform(math.log(1e-3), math.log(0.45), spec.n))
    Y = Y0 + (frac * _dist(X, Y0))[:, None] * spec.directions(rng, spec.n)
    return X, Y, Y0


# ---------------------------------------------------------------- pointwise checks


def _rho_of(K: KernelSpec, rho):
    r = rho if rho is not None else K.rho
    return r if r is not None else constant_rho(1e6)


def _size_fit(K, X, Y, Ns, rho):
    r = _dist(X, Y)
    base = np.abs(K(X, Y)) * r ** K.dim
    rx = rho(X)
    out, wit = {}, {}
    for N in Ns:
        vals = base * (1.0 + r / rx) ** N
        k = int(np.argmax(vals))
        out[float(N)] = float(vals[k])
        wit[float(N)] = {"x": X[k].tolist(), "y": Y[k].tolist()}
    return out, wit


def check_size_pointwise(K: KernelSpec, N: float, spec: Optional[SampleSpec] = None,
                         ladder: Sequence[float] = (0, 1, 2, 4, 8),
                         samples: Optional[tuple] = None,
                         rho: Optional[CriticalRadiusField] = None) -> ConditionReport:
    """C_N = sup |K(x,y)| |x-y|^d (1 + |x-y|/rho(x))^N over sample pairs."""
    spec = spec or SampleSpec(low=(-4.0,) * K.dim, high=(4.0,) * K.dim)
    rho = _rho_of(K, rho)
    Ns = sorted(set(float(n) for n in ladder) | {float(N)})
    X, Y = samples if samples is not None else pointwise_pairs(spec)
    if np.any(_dist(X, Y) < spec.min_sep * (1 - 1e-12)):
        raise KernelError("diagonal sample: |x - y| below the minimum separation")
    fits, wit = _size_fit(K, X, Y, Ns, rho)
    Xe, Ye = pointwise_pairs(spec, SCALE_EXTENSION) if samples is None else (X, Y)
    ext, _ = _size_fit(K, Xe, Ye, [N], rho)
    ok, g = _judge(fits[float(N)], max(ext[float(N)], fits[float(N)]))
    return ConditionReport("size-pointwise", K.name, fits, float(N), ok, g, wit[float(N)], X.shape[0])


def _smooth_fit(K, X, Y, Y0, delta, N, rho):
    dxy = _dist(X, Y)
    dyy = _dist(Y, Y0)
    good = dxy > 2 * dyy
    Xg, Yg, Y0g = X[good], Y[good], Y0[good]
    diff = np.abs(K(Xg, Yg) - K(Xg, Y0g))
    vals = diff * dxy[good] ** (K.dim + delta) / dyy[good] ** delta
    if N:
        vals = vals * (1.0 + dxy[good] / rho(Xg)) ** N
    if vals.size == 0:
        return 0.0, {}, int((~good).sum())
    k = int(np.argmax(vals))
    return float(vals[k]), {"x": Xg[k].tolist(), "y": Yg[k].tolist(), "y0": Y0g[k].tolist()}, int((~good).sum())


def check_smoothness_pointwise(K: KernelSpec, delta: Optional[float] = None,
                               spec: Optional[SampleSpec] = None, samples: Optional[tuple] = None,
                               N: float = 0.0, rho: Optional[CriticalRadiusField] = None) -> ConditionReport:
    """C = sup |K(x,y) - K(x,y0)| |x-y|^(d+delta) / |y-y0|^delta, times
    (1 + |x-y|/rho(x))^N for the decay variant; triples violating
    |x-y| > 2|y-y0| are skipped and counted."""
    delta = K.delta if delta is None else float(delta)
    spec = spec or SampleSpec(low=(-4.0,) * K.dim, high=(4.0,) * K.dim)
    rho = _rho_of(K, rho)
    X, Y, Y0 = samples if samples is not None else smoothness_triples(spec)
    base, wit, skipped = _smooth_fit(K, X, Y, Y0, delta, N, rho)
    if samples is None:
        ext, _, _ = _smooth_fit(K, *smoothness_triples(spec, SCALE_EXTENSION), delta, N, rho)
    else:
        ext = base
    ok, g = _judge(base, max(base, ext))
    name = "smoothness-pointwise" if not N else "smoothness-pointwise-decay"
    return ConditionReport(name, K.name, {delta: base}, delta, ok, g, wit, X.shape[0], skipped)


# ---------------------------------------------------------------- L^s checks


@dataclass(frozen=True)
class AnnulusSpec:
    """Centers, a dyadic radius ladder and test points per (center, R).

    Quadrature uses a midpoint lattice with `resolution` points per axis on
    the bounding cube of the integration region."""
    low: Sequence[float] = (-4.0,)
    high: Sequence[float] = (4.0,)
    n_centers: int = 6
    radii: Sequence[float] = tuple(2.0 ** k for k in range(-3, 4))
    n_test: int = 4
    resolution: Optional[int] = None
    seed: int = 0
    r_fractions: Sequence[float] = (1 / 4, 1 / 8, 1 / 16, 1 / 32)

    @property
    def dim(self) -> int:
        return len(self.low)

    def res(self) -> int:
        if self.resolution is not None:
            return self.resolution
        return {1: 512, 2: 96, 3: 32}.get(self.dim, 16)

    def centers(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, 3])
        lo, hi = np.asarray(self.low, float), np.asarray(self.high, float)
        return lo + (hi - lo) * rng.random((self.n_centers, self.dim))

    def extended(self) -> "AnnulusSpec":
        top = max(self.radii)
        extra = tuple(top * 2.0 ** k for k in range(1, int(math.log2(SCALE_EXTENSION)) + 1))
        return AnnulusSpec(self.low, self.high, self.n_centers, tuple(self.radii) + extra, self.n_test,
                           self.resolution, self.seed, self.r_fractions)


def _region_nodes(center: np.ndarray, half: float, m: int, inner: float, outer: float):
    """Midpoint nodes of the cube [center - half, center + half]^d with
    inner < |x - center| < outer, and the cell volume."""
    d = center.size
    step = 2 * half / m
    ax = -half + step * (np.arange(m) + 0.5)
    mesh = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    r = np.linalg.norm(mesh, axis=1)
    sel = (r > inner) & (r < outer)
    nodes = center + mesh[sel]
    if nodes.shape[0] < MIN_ANNULUS_POINTS:
        raise KernelError("annulus under-resolved (fewer than 8 quadrature points)")
    return nodes, step ** d


def _ls_norm(vals: np.ndarray, vol: float, s: float) -> float:
    if math.isinf(s):
        return float(np.max(np.abs(vals)))
    return float((np.sum(np.abs(vals) ** s) * vol) ** (1.0 / s))


def _pow_conj(s: float) -> float:
    """d/s' exponent helper: 1/s' = 1 - 1/s."""
    return 1.0 if math.isinf(s) else 1.0 - 1.0 / s


def _test_points(rng, center, radius, n, dim, inner=0.0):
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    rr = inner + (radius - inner) * rng.random(n)
    return np.vstack([center[None, :], center + rr[:, None] * v]) if inner == 0 else center + rr[:, None] * v


def _size_ls_fit(K, s, Ns, ann: AnnulusSpec, rho):
    rng = np.random.default_rng([ann.seed, 4])
    best = {float(N): (-1.0, None) for N in Ns}
    per_scale: Dict[float, float] = {}
    count = 0
    for x0 in ann.centers():
        for R in ann.radii:
            nodes, vol = _region_nodes(x0, 2 * R, ann.res(), R, 2 * R)
            base_scale = R ** (K.dim * _pow_conj(s))
            decay = 1.0 + R / float(rho(x0[None, :])[0])
            for y in _test_points(rng, x0, R / 2, ann.n_test, K.dim)[: ann.n_test + 1]:
                if np.linalg.norm(y - x0) >= R / 2:
                    continue
                vals = K(nodes, np.broadcast_to(y, nodes.shape))
                lhs = _ls_norm(vals, vol, s) * base_scale
                count += 1
                per_scale[R] = max(per_scale.get(R, 0.0), lhs)
                for N in Ns:
                    c = lhs * decay ** N
                    if c > best[float(N)][0]:
                        best[float(N)] = (c, {"x0": x0.tolist(), "R": R, "y": y.tolist()})
    return best, per_scale, count


def check_size_ls(K: KernelSpec, s: float, N: float, ann: Optional[AnnulusSpec] = None,
                  ladder: Sequence[float] = (0, 1, 2, 4), rho: Optional[CriticalRadiusField] = None) -> ConditionReport:
    """C_N = sup (int_{R<|x0-x|<2R} |K(x,y)|^s dx)^(1/s) R^(d/s') (1 + R/rho(x0))^N
    over annuli and test points |y - x0| < R/2."""
    ann = ann or AnnulusSpec(low=(-4.0,) * K.dim, high=(4.0,) * K.dim)
    rho = _rho_of(K, rho)
    Ns = sorted(set(float(n) for n in ladder) | {float(N)})
    best, per_scale, count = _size_ls_fit(K, s, Ns, ann, rho)
    ext, _, _ = _size_ls_fit(K, s, [N], ann.extended(), rho)
    fits = {k: v[0] for k, v in best.items()}
    ok, g = _judge(fits[float(N)], max(fits[float(N)], ext[float(N)][0]))
    return ConditionReport("size-ls", K.name, fits, float(N), ok, g, best[float(N)][1] or {}, count,
                           per_scale=per_scale)


def _smooth_ls_fit(K, s, delta, N, ann: AnnulusSpec, rho, decay_inside: bool):
    rng = np.random.default_rng([ann.seed, 5])
    best, wit = -1.0, {}
    per_scale: Dict[float, float] = {}
    count = skipped = 0
    for y0 in ann.centers():
        rho_y0 = float(rho(y0[None, :])[0])
        for R in ann.radii:
            nodes, vol = _region_nodes(y0, 2 * R, ann.res(), R, 2 * R)
            k0 = K(nodes, np.broadcast_to(y0, nodes.shape))
            weight = None
            if N and decay_inside:
                weight = (1.0 + R / rho(nodes)) ** N
            for frac in ann.r_fractions:
                r = R * frac
                if not (r <= rho_y0 and r < R / 2):
                    skipped += 1
                    continue
                for y in _test_points(rng, y0, r, ann.n_test, K.dim, inner=0.0)[1:]:
                    if np.linalg.norm(y - y0) >= r:
                        skipped += 1
                        continue
                    diff = K(nodes, np.broadcast_to(y, nodes.shape)) - k0
                    if weight is not None:
                        diff = diff * weight
                    c = _ls_norm(diff, vol, s) * R ** (K.dim * _pow_conj(s)) * (R / r) ** delta
                    count += 1
                    per_scale[R] = max(per_scale.get(R, 0.0), c)
                    if c > best:
                        best, wit = c, {"y0": y0.tolist(), "r": r, "R": R, "y": y.tolist()}
    return max(best, 0.0), wit, per_scale, count, skipped


def check_smoothness_ls(K: KernelSpec, s: float, delta: Optional[float] = None,
                        ann: Optional[AnnulusSpec] = None, rho: Optional[CriticalRadiusField] = None) -> ConditionReport:
    """C = sup (int_{R<|x-y0|<2R} |K(x,y) - K(x,y0)|^s dx)^(1/s) R^(d/s') (R/r)^delta
    over |y - y0| < r <= rho(y0), r < R/2; violating triples are skipped."""
    return _smoothness_ls(K, s, delta, 0.0, ann, rho, "smoothness-ls")


def _smoothness_ls(K, s, delta, N, ann, rho, name):
    delta = K.delta if delta is None else float(delta)
    ann = ann or AnnulusSpec(low=(-4.0,) * K.dim, high=(4.0,) * K.dim)
    rho = _rho_of(K, rho)
    base, wit, per_scale, count, skipped = _smooth_ls_fit(K, s, delta, N, ann, rho, True)
    ext = _smooth_ls_fit(K, s, delta, N, ann.extended(), rho, True)[0]
    ok, g = _judge(base, max(base, ext))
    return ConditionReport(name, K.name, {delta: base}, delta, ok, g, wit, count, skipped, per_scale)


def check_smoothness_decay(K: KernelSpec, s: float, delta: Optional[float] = None, N: float = 1.0,
                           spec=None, rho: Optional[CriticalRadiusField] = None) -> ConditionReport:
    """Smoothness with the extra factor (1 + ./rho(x))^N.

    s = inf: pointwise, factor (1 + |x-y|/rho(x))^N.  s < inf: annulus
    integral in x around y0 with (1 + R/rho(x))^N inside the integrand."""
    if math.isinf(s):
        if spec is not None and not isinstance(spec, SampleSpec):
            raise KernelError("pointwise decay check needs a SampleSpec")
        return check_smoothness_pointwise(K, delta, spec, N=N, rho=rho)
    if spec is not None and not isinstance(spec, AnnulusSpec):
        raise KernelError("integral decay check needs an AnnulusSpec")
    return _smoothness_ls(K, s, delta, N, spec, rho, "smoothness-ls-decay")


def _size_ball_fit(K, s, Ns, ann: AnnulusSpec, rho):
    rng = np.random.default_rng([ann.seed, 6])
    best = {float(N): (-1.0, None) for N in Ns}
    per_scale: Dict[float, float] = {}
    count = 0
    for x0 in ann.centers():
        decay_base = float(rho(x0[None, :])[0])
        for R in ann.radii:
            nodes, vol = _region_nodes(x0, R / 2, ann.res(), -1.0, R / 2)
            for y in _test_points(rng, x0, 2 * R, ann.n_test, K.dim, inner=R):
                dist = np.linalg.norm(y - x0)
                if not (R < dist < 2 * R):
                    continue
                vals = K(nodes, np.broadcast_to(y, nodes.shape))
                lhs = _ls_norm(vals, vol, s) * R ** (K.dim * _pow_conj(s))
                count += 1
                per_scale[R] = max(per_scale.get(R, 0.0), lhs)
                for N in Ns:
                    c = lhs * (1.0 + R / decay_base) ** N
                    if c > best[float(N)][0]:
                        best[float(N)] = (c, {"x0": x0.tolist(), "R": R, "y": y.tolist()})
    return best, per_scale, count


def check_size_ball(K: KernelSpec, s: float, N: float, ann: Optional[AnnulusSpec] = None,
                    ladder: Sequence[float] = (0, 1, 2, 4), rho: Optional[CriticalRadiusField] = None) -> ConditionReport:
    """C_N = sup (int_{B(x0,R/2)} |K(x,y)|^s dx)^(1/s) R^(d/s') (1 + R/rho(x0))^N
    for R < |y - x0| < 2R."""
    ann = ann or AnnulusSpec(low=(-4.0,) * K.dim, high=(4.0,) * K.dim)
    rho = _rho_of(K, rho)
    Ns = sorted(set(float(n) for n in ladder) | {float(N)})
    best, per_scale, count = _size_ball_fit(K, s, Ns, ann, rho)
    ext, _, _ = _size_ball_fit(K, s, [N], ann.extended(), rho)
    fits = {k: max(v[0], 0.0) for k, v in best.items()}
    ok, g = _judge(fits[float(N)], max(fits[float(N)], ext[float(N)][0]))
    return ConditionReport("size-ball", K.name, fits, float(N), ok, g, best[float(N)][1] or {}, count,
                           per_scale=per_scale)


# ---------------------------------------------------------------- application


def apply_kernel(K: KernelSpec, f: LatticeField, eps: float) -> LatticeField:
    """T_eps f(x) = h^d sum_{|y - x| > eps} K(x, y) f(y), summed in lattice order."""
    if eps < f.h * (1 - 1e-12):
        raise KernelError("truncation must be at least the lattice spacing")
    pts = f.grid.points()
    fy = f.samples.ravel()
    n = pts.shape[0]
    out = np.empty(n)
    chunk = max(1, PAIR_BUDGET // max(n, 1))
    vol = f.grid.cell_volume
    for a in range(0, n, chunk):
        xs = pts[a:a + chunk]
        m = xs.shape[0]
        X = np.repeat(xs, n, axis=0)
        Y = np.tile(pts, (m, 1))
        # lattice points at distance exactly eps are excluded on both sides
        far = _dist(X, Y) > eps + FACE_TOL * f.h
        vals = np.zeros(m * n)
        vals[far] = K(X[far], Y[far])
        out[a:a + m] = (vals.reshape(m, n) * fy[None, :]).sum(axis=1) * vol
    return f.with_samples(out.reshape(f.grid.shape))


def annulus_mass(K: KernelSpec, f: LatticeField, eps1: float, eps2: float) -> LatticeField:
    """h^d sum over eps1 < |x-y| <= eps2 of |K(x,y)| |f(y)| (bounds T_eps1 - T_eps2)."""
    pts = f.grid.points()
    fy = np.abs(f.samples.ravel())
    n = pts.shape[0]
    out = np.empty(n)
    chunk = max(1, PAIR_BUDGET // max(n, 1))
    for a in range(0, n, chunk):
        xs = pts[a:a + chunk]
        m = xs.shape[0]
        X = np.repeat(xs, n, axis=0)
        Y = np.tile(pts, (m, 1))
        r = _dist(X, Y)
        tol = FACE_TOL * f.h
        sel = (r > eps1 + tol) & (r <= eps2 + tol)
        vals = np.zeros(m * n)
        vals[sel] = np.abs(K(X[sel], Y[sel]))
        out[a:a + m] = (vals.reshape(m, n) * fy[None, :]).sum(axis=1) * f.grid.cell_volume
    return f.with_samples(out.reshape(f.grid.shape))


def condition_suite(K: KernelSpec, N: float, s: float = 2.0, delta: Optional[float] = None,
                    spec: Optional[SampleSpec] = None, ann: Optional[AnnulusSpec] = None) -> Dict[str, ConditionReport]:
    """Size and smoothness reports, pointwise and L^s, for one kernel."""
    return {
        "size-pointwise": check_size_pointwise(K, N, spec),
        "smoothness-pointwise": check_smoothness_pointwise(K, delta, spec),
        "size-ls": check_size_ls(K, s, N, ann),
        "smoothness-ls": check_smoothness_ls(K, s, delta, ann),
    }


def reports_json(reports: Dict[str, ConditionReport]) -> str:
    return json.dumps({k: v.to_dict() for k, v in reports.items()}, indent=2)
