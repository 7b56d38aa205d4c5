"""Mixed weak-type sweeps: uv({Op(f v)/v > t}) against (1/t) int |f| u v.

A sweep fixes (rho, u, v, f, operator) on a lattice, evaluates
g = Op(f v)/v pointwise, and records t * uv({g > t}) / int |f| u v over a
dyadic t ladder.  "The inequality holds" is read as refinement stability
of the sup of that ratio under lattice halvings.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import yaml

from .critical_radius import CriticalRadiusField, constant_rho, exp_square_rho, harmonic_rho
from .dyadic_cz import SweepRecord
from .lattice import Cube, FamilyIndex, Grid, LatticeField, exhaustive_family, make_grid
from .maximal_ops import dyadic_maximal, m_rho_sigma
from .sczo_kernels import apply_kernel, build_kernel
from .weight_classes import STABLE_GROWTH, TestBench

PROFILES = ("thm1", "thm2", "thm3", "none")
OPERATORS = ("maximal", "surrogate", "dyadic-local")
DEFAULT_SIGMAS = (0.0, 1.0, 2.0, 4.0, 8.0, 16.0)
NEGATIVE_GROWTH = 3.0


class ConfigError(ValueError):
    pass


class HypothesisError(RuntimeError):
    def __init__(self, failing: List[str]):
        super().__init__("hypothesis pre-check failed: " + ", ".join(failing))
        self.failing = failing


# ---------------------------------------------------------------- specs

FieldFn = Callable[[np.ndarray], np.ndarray]


def parse_field(spec) -> FieldFn:
    """Field grammar: one | const:c | power:a | bracket:a | exp:a |
    max1power:a | indicator:lo:hi, optionally prefixed by a factor as in
    2.5*indicator:-1:1.  Numbers may also be given directly."""
    if isinstance(spec, (int, float)):
        c = float(spec)
        return lambda x: np.full(x.shape[0], c)
    if not isinstance(spec, str):
        raise ConfigError(f"field spec must be a string, got {spec!r}")
    if "*" in spec:
        coef, rest = spec.split("*", 1)
        try:
            c = float(coef)
        except ValueError as exc:
            raise ConfigError(f"bad factor in field spec {spec!r}") from exc
        inner = parse_field(rest)
        return lambda x: c * inner(x)
    parts = spec.strip().split(":")
    kind, args = parts[0], parts[1:]
    try:
        nums = [float(a) for a in args]
    except ValueError as exc:
        raise ConfigError(f"bad number in field spec {spec!r}") from exc

    def need(k):
        if len(nums) != k:
            raise ConfigError(f"field {kind!r} takes {k} argument(s): {spec!r}")

    norm = lambda x: np.linalg.norm(x, axis=1)
    if kind == "one":
        need(0)
        return lambda x: np.ones(x.shape[0])
    if kind == "const":
        need(1)
        return lambda x: np.full(x.shape[0], nums[0])
    if kind == "power":
        need(1)
        return lambda x: norm(x) ** nums[0]
    if kind == "bracket":
        need(1)
        return lambda x: (1.0 + norm(x)) ** nums[0]
    if kind == "exp":
        need(1)
        return lambda x: np.exp(nums[0] * norm(x))
    if kind == "max1power":
        need(1)
        return lambda x: np.maximum(1.0, norm(x) ** nums[0])
    if kind == "indicator":
        need(2)
        lo, hi = nums
        return lambda x: np.all((x >= lo) & (x <= hi), axis=1).astype(float)
    raise ConfigError(f"unknown field kind {kind!r}")


def parse_rho(spec) -> CriticalRadiusField:
    """harmonic[:scale] | constant:c | classical | exp-square."""
    if not isinstance(spec, str):
        raise ConfigError(f"rho spec must be a string, got {spec!r}")
    parts = spec.split(":")
    try:
        if parts[0] == "harmonic":
            return harmonic_rho(float(parts[1]) if len(parts) > 1 else 1.0)
        if parts[0] == "constant":
            return constant_rho(float(parts[1]))
        if parts[0] == "classical":
            return constant_rho(1e6)
        if parts[0] == "exp-square":
            return exp_square_rho()
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad rho spec {spec!r}") from exc
    raise ConfigError(f"unknown rho kind {parts[0]!r}")


@dataclass
class ExperimentConfig:
    name: str = "sweep"
    low: List[float] = field(default_factory=lambda: [-10.0])
    high: List[float] = field(default_factory=lambda: [10.0])
    points: int = 512
    offset: bool = True
    rho: str = "harmonic"
    u: str = "one"
    v: str = "one"
    f: str = "indicator:-1:1"
    operator: str = "maximal"
    sigma: float = 0.0
    kernel: Dict[str, float] = field(default_factory=lambda: {"N0": 4.0, "delta": 1.0})
    t_steps: int = 24
    t_factor: float = 2.0
    t0: Optional[float] = None
    profile: str = "thm1"
    s_prime: float = 2.0
    beta: float = 3.0
    precheck_points: int = 256
    precheck_refinements: int = 2
    refine: int = 2
    override: bool = False
    seed: int = 0
    sigma_ladder: List[float] = field(default_factory=lambda: list(DEFAULT_SIGMAS))

    def __post_init__(self):
        self.low = [float(a) for a in np.atleast_1d(self.low)]
        self.high = [float(a) for a in np.atleast_1d(self.high)]
        if len(self.low) != len(self.high):
            raise ConfigError("low and high differ in dimension")
        if any(b <= a for a, b in zip(self.low, self.high)):
            raise ConfigError("box must have positive extent")
        if self.operator not in OPERATORS:
            raise ConfigError(f"operator must be one of {OPERATORS}")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        if self.points < 2 or self.t_steps < 1 or not self.t_factor > 1:
            raise ConfigError("need points >= 2, t_steps >= 1, t_factor > 1")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.t0 is not None and not self.t0 > 0:
            raise ConfigError("t0 must be positive")
        if self.profile == "thm3" and not self.beta > self.s_prime:
            raise ConfigError("thm3 needs beta > s'")
        for key in ("u", "v", "f"):
            parse_field(getattr(self, key))
        parse_rho(self.rho)

    @property
    def dim(self) -> int:
        return len(self.low)

    def replace(self, **kw) -> "ExperimentConfig":
        d = asdict(self)
        d.update(kw)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


_CONFIG_KEYS = set(ExperimentConfig.__dataclass_fields__)


def config_from_mapping(data: dict) -> ExperimentConfig:
    """Flatten the nested config sections onto ExperimentConfig fields."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    flat = {}
    for key, val in data.items():
        if key == "lattice" and isinstance(val, dict):
            flat.update({k: val[k] for k in val})
        elif key == "operator" and isinstance(val, dict):
            flat["operator"] = val.get("kind", "maximal")
            if "sigma" in val:
                flat["sigma"] = val["sigma"]
            if "kernel" in val:
                flat["kernel"] = val["kernel"]
        elif key == "t_ladder" and isinstance(val, dict):
            for k, target in (("steps", "t_steps"), ("factor", "t_factor"), ("t0", "t0")):
                if k in val:
                    flat[target] = val[k]
        elif key == "hypotheses" and isinstance(val, dict):
            for k, target in (("profile", "profile"), ("s_prime", "s_prime"), ("beta", "beta"),
                              ("precheck_points", "precheck_points"),
                              ("precheck_refinements", "precheck_refinements"), ("override", "override")):
                if k in val:
                    flat[target] = val[k]
        else:
            flat[key] = val
    unknown = set(flat) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**flat)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_mapping(data or {})


# ---------------------------------------------------------------- prechecks


@dataclass
class PrecheckResult:
    name: str
    passed: bool
    detail: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, **self.detail}


def _pow(fn: FieldFn, a: float) -> FieldFn:
    return lambda x: fn(x) ** a


def precheck_hypotheses(cfg: ExperimentConfig, profile: Optional[str] = None) -> List[PrecheckResult]:
    """Empirical class memberships demanded by the hypothesis profile."""
    profile = profile or cfg.profile
    if profile == "none":
        return []
    bench = TestBench(parse_rho(cfg.rho), cfg.low, cfg.high, cfg.precheck_points, cfg.precheck_refinements)
    u, v = parse_field(cfg.u), parse_field(cfg.v)
    out = []
    if profile in ("thm1", "thm2"):
        th, st = bench.fit_theta("u in A_1", bench.a1(u))
        out.append(PrecheckResult("u in A_1^rho", th is not None, {"theta": th, "values": st.values}))
        p, th, st = bench.fit_ainf("v in A_inf(u)", v, u)
        out.append(PrecheckResult("v in A_inf^rho(u)", p is not None, {"p": p, "theta": th, "values": st.values}))
    elif profile == "thm3":
        th, st = bench.fit_theta("u^s' in A_1", bench.a1(_pow(u, cfg.s_prime)))
        out.append(PrecheckResult("u^s' in A_1^rho", th is not None,
                                  {"s_prime": cfg.s_prime, "theta": th, "values": st.values}))
        p, th, st = bench.fit_ainf("v in A_inf(u^beta)", v, _pow(u, cfg.beta))
        out.append(PrecheckResult("v in A_inf^rho(u^beta)", p is not None and cfg.beta > cfg.s_prime,
                                  {"beta": cfg.beta, "p": p, "theta": th, "values": st.values}))
    return out


# ---------------------------------------------------------------- sweeps


def build_grid(cfg: ExperimentConfig, points: Optional[int] = None) -> Grid:
    n = points or cfg.points
    extent = max(b - a for a, b in zip(cfg.low, cfg.high))
    return make_grid(cfg.low, cfg.high, extent / n, offset=cfg.offset)


def _sample(fn: FieldFn, grid: Grid) -> np.ndarray:
    return np.asarray(fn(grid.points()), dtype=float).reshape(grid.shape)


def evaluate_operator(cfg: ExperimentConfig, fv: LatticeField) -> np.ndarray:
    """|Op(f v)| on the lattice for the configured operator."""
    rho = parse_rho(cfg.rho)
    if cfg.operator == "maximal":
        return m_rho_sigma(fv, rho, cfg.sigma, exhaustive_family(fv.grid)).values.samples
    if cfg.operator == "surrogate":
        params = dict(cfg.kernel)
        K = build_kernel("surrogate", dim=cfg.dim, rho=rho, **params)
        return np.abs(apply_kernel(K, fv, fv.h).samples)
    side = np.asarray(cfg.high) - np.asarray(cfg.low)
    if not np.allclose(side, side[0]):
        raise ConfigError("dyadic-local operator needs a cubical box")
    R = Cube(tuple((np.asarray(cfg.low) + np.asarray(cfg.high)) / 2), float(side[0]) * math.sqrt(cfg.dim) / 2)
    return dyadic_maximal(fv, R).values.samples


def t_ladder(cfg: ExperimentConfig, rhs: float, uv_box: float) -> np.ndarray:
    t0 = cfg.t0 if cfg.t0 is not None else (2.0 * rhs / uv_box if rhs > 0 else 1.0)
    return t0 * cfg.t_factor ** np.arange(cfg.t_steps)


def _sweep_rows(g: np.ndarray, uv: np.ndarray, rhs: float, cell: float, ladder) -> List[dict]:
    rows = []
    for t in ladder:
        lhs = float(np.sum(uv[g > t]) * cell)
        rows.append({"t": float(t), "lhs": lhs, "rhs": rhs, "ratio": float(t * lhs / rhs) if rhs > 0 else 0.0})
    return rows


def _require_compact_support(fs: np.ndarray):
    """f must vanish on the outermost lattice layer (support inside the box)."""
    edge = np.zeros(fs.shape, dtype=bool)
    for ax in range(fs.ndim):
        sl = [slice(None)] * fs.ndim
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    if np.any(fs[edge] != 0):
        raise ConfigError("f must have compact support inside the box")
    if not np.all(np.isfinite(fs)):
        raise ConfigError("f must be bounded")


def run_sweep(cfg: ExperimentConfig, points: Optional[int] = None, precheck: bool = True) -> SweepRecord:
    """One sweep at the configured (or given) lattice size."""
    checks = precheck_hypotheses(cfg) if precheck else []
    failing = [c.name for c in checks if not c.passed]
    if failing and not cfg.override:
        raise HypothesisError(failing)
    grid = build_grid(cfg, points)
    fs = _sample(parse_field(cfg.f), grid)
    _require_compact_support(fs)
    us = _sample(parse_field(cfg.u), grid)
    vs = _sample(parse_field(cfg.v), grid)
    if np.any(us <= 0) or np.any(vs <= 0) or not (np.all(np.isfinite(us)) and np.all(np.isfinite(vs))):
        raise ConfigError("u and v must be positive and finite on the lattice")
    fv = LatticeField(grid, fs * vs)
    g = evaluate_operator(cfg, fv) / vs
    uv = us * vs
    cell = grid.cell_volume
    rhs = float(np.sum(np.abs(fs) * uv) * cell)
    rows = _sweep_rows(g, uv, rhs, cell, t_ladder(cfg, rhs, float(np.sum(uv) * cell)))
    # rows whose level set is the whole box only reproduce t * uv(box) / rhs
    full = float(np.sum(uv) * cell)
    interior = [r["ratio"] for r in rows if r["lhs"] < full]
    meta = {"name": cfg.name, "points": grid.shape[0], "h": grid.h, "operator": cfg.operator,
            "sup_above_floor": max(interior, default=0.0),
            "sigma": cfg.sigma, "prechecks": [c.to_dict() for c in checks],
            "override": bool(failing and cfg.override)}
    return SweepRecord(rows, max(r["ratio"] for r in rows), meta=meta)


def plain_weak_sweep(cfg: ExperimentConfig, points: Optional[int] = None) -> SweepRecord:
    """uv({Op f > t}) against int |f| u: the sweep without the v-perturbation."""
    grid = build_grid(cfg, points)
    fs = _sample(parse_field(cfg.f), grid)
    us = _sample(parse_field(cfg.u), grid)
    g = evaluate_operator(cfg, LatticeField(grid, fs))
    cell = grid.cell_volume
    rhs = float(np.sum(np.abs(fs) * us) * cell)
    rows = _sweep_rows(g, us, rhs, cell, t_ladder(cfg, rhs, float(np.sum(us) * cell)))
    return SweepRecord(rows, max(r["ratio"] for r in rows))


def drift(values: Sequence[float]) -> float:
    """Largest factor between successive values (either direction)."""
    vals = list(values)
    if any(not math.isfinite(v) for v in vals):
        return math.inf
    g = 1.0
    for a, b in zip(vals, vals[1:]):
        if a == 0 and b == 0:
            continue
        if a == 0 or b == 0:
            return math.inf
        g = max(g, b / a, a / b)
    return g


def refinement_sweeps(cfg: ExperimentConfig, refinements: Optional[int] = None,
                      precheck: bool = True) -> List[SweepRecord]:
    """Sweeps at points, 2 points, ... ; the last record carries the drift."""
    k = cfg.refine if refinements is None else refinements
    recs = []
    for i in range(k + 1):
        recs.append(run_sweep(cfg, cfg.points * 2 ** i, precheck=precheck and i == 0))
    sups = [r.sup_ratio for r in recs]
    for r in recs:
        r.refinement_drift = drift(sups)
        r.meta["sup_by_level"] = sups
    return recs


@dataclass
class SigmaSearchResult:
    sigma_star: Optional[float]
    status: str  # stable | unstable
    tried: Dict[float, List[float]]
    record: Optional[SweepRecord]

    def to_dict(self) -> dict:
        return {"sigma_star": self.sigma_star, "status": self.status,
                "tried": {str(k): v for k, v in self.tried.items()}}


def sigma_search(cfg: ExperimentConfig, sigmas: Optional[Sequence[float]] = None,
                 refinements: Optional[int] = None, limit: float = STABLE_GROWTH) -> SigmaSearchResult:
    """Smallest sigma on the ladder whose sup_ratio drifts less than limit."""
    if cfg.operator != "maximal":
        raise ConfigError("sigma search applies to the maximal operator")
    ladder = list(sigmas) if sigmas is not None else list(cfg.sigma_ladder)
    tried = {}
    first = True
    for s in ladder:
        recs = refinement_sweeps(cfg.replace(sigma=float(s)), refinements, precheck=first)
        first = False
        tried[float(s)] = [r.sup_ratio for r in recs]
        if recs[-1].refinement_drift < limit:
            return SigmaSearchResult(float(s), "stable", tried, recs[-1])
    return SigmaSearchResult(None, "unstable", tried, None)


def negative_control(cfg: ExperimentConfig, refinements: Optional[int] = None,
                     threshold: float = NEGATIVE_GROWTH) -> SweepRecord:
    """Run with the override and report whether sup_ratio grows by threshold."""
    recs = refinement_sweeps(cfg.replace(override=True), refinements)
    sups = [r.sup_ratio for r in recs]
    growth = sups[-1] / sups[0] if sups[0] > 0 else math.inf
    last = recs[-1]
    last.meta.update({"growth": growth, "threshold": threshold, "fired": bool(growth >= threshold)})
    return last


def level_set_oracle(f: LatticeField, family, t: float) -> np.ndarray:
    """Union of the cubes whose average of |f| exceeds t (lattice mask)."""
    idx = FamilyIndex(f.grid, family)
    avg = idx.sums(np.abs(f.samples)) / np.maximum(idx.counts, 1)
    mask = np.zeros(f.grid.shape, dtype=bool)
    for k in np.flatnonzero(idx.nonempty & (avg > t)):
        mask[idx.slices(k)] = True
    return mask


def dumps_record(rec: SweepRecord) -> str:
    """Structured text: one line per t, then summary lines."""
    lines = ["t\tlhs\trhs\tratio"]
    for r in rec.rows:
        lines.append(f"{r['t']!r}\t{r['lhs']!r}\t{r['rhs']!r}\t{r['ratio']!r}")
    lines.append(f"sup_ratio\t{rec.sup_ratio!r}")
    lines.append(f"refinement_drift\t{rec.refinement_drift!r}")
    return "\n".join(lines) + "\n"


def record_json(rec: SweepRecord) -> str:
    return json.dumps(rec.to_dict(), indent=2, default=str)
