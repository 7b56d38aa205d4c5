"""Empirical characteristic constants of rho-adapted weight classes.

Every constant is a sup over an explicit cube family of a per-cube ratio,
divided by the growth allowance (1 + r/rho(center))^theta.  inf_Q and
sup_Q are taken over the lattice points inside Q.

Membership is judged by refinement: a weight is declared a member when
the constant is finite, changes by less than STABLE_GROWTH between
successive lattice halvings and shows no steady power-law climb.  Divergence is flagged either by a jump
above DIVERGENCE_GROWTH or by a persistent power-law trend (see
RefinementStudy.diverges).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import exponents
from .critical_radius import CriticalRadiusField, harmonic_rho
from .lattice import (
    Cube,
    CubeFamily,
    FamilyIndex,
    Grid,
    LatticeError,
    LatticeField,
    exhaustive_family,
    make_grid,
)
from .maximal_ops import m_rho_sigma, penalty

CLASSES = ("A_p(u)", "A_1(u)", "RH_s", "RH_inf", "A_inf_eps")
STABLE_GROWTH = 1.5
DIVERGENCE_GROWTH = 10.0
# a trend counts as power-law divergence when every step grows at least
# this exponent (in log value per log refinement) without decelerating
DIVERGENCE_SLOPE = 0.1
ORDER_SLACK = 1e-9
AINF_PS = (2.0, 4.0, 8.0)
EPS_LADDER = (0.25, 0.5, 1.0)


class WeightError(LatticeError):
    pass


@dataclass(eq=False)
class ClassConstantEstimate:
    cls: str
    index: float  # p for A_p, s for RH_s, eps for A_inf_eps; nan for A_1
    theta: float
    value: float
    witness_index: int
    witness: Optional[Cube]
    base: Optional[str] = None
    subset: Optional[np.ndarray] = None  # lattice mask of the witness set E
    per_cube: Optional[np.ndarray] = field(default=None, repr=False)
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "class": self.cls,
            "index": _num(self.index),
            "theta": self.theta,
            "value": _num(self.value),
            "witness_index": self.witness_index,
            "base": self.base,
            "flags": self.flags,
        }
        if self.witness is not None:
            out["witness"] = {"center": list(self.witness.center), "radius": self.witness.radius}
        return out


def _num(x: float):
    return x if math.isfinite(x) else str(x)


# ---------------------------------------------------------------- per-cube ratios


def _positive(w: LatticeField, name: str) -> np.ndarray:
    s = w.samples
    if not np.all(np.isfinite(s)):
        raise WeightError(f"non-integrable sample in {name}")
    if np.any(s <= 0):
        raise WeightError(f"{name} must be positive on the lattice")
    return s


def _geo_normalize(a: np.ndarray) -> np.ndarray:
    return a / math.exp(float(np.mean(np.log(a))))


def _index(w: LatticeField, family: Optional[CubeFamily]) -> FamilyIndex:
    family = family if family is not None else exhaustive_family(w.grid)
    idx = FamilyIndex(w.grid, family)
    if not idx.nonempty.all():
        raise LatticeError("cube outside lattice")
    return idx


def ap_ratios(idx: FamilyIndex, w: np.ndarray, p: float, u: Optional[np.ndarray] = None) -> np.ndarray:
    """(avg_u w)^(1/p) (avg_u w^(1-p'))^(1/p') per cube."""
    if not p > 1:
        raise WeightError("need p > 1")
    pp = p / (p - 1.0)
    wn = _geo_normalize(w)
    dual = wn ** (1.0 - pp)
    if u is None:
        a = idx.sums(wn) / idx.counts
        b = idx.sums(dual) / idx.counts
    else:
        um = idx.sums(u)
        a = idx.sums(wn * u) / um
        b = idx.sums(dual * u) / um
    with np.errstate(over="ignore", invalid="ignore"):
        return a ** (1.0 / p) * b ** (1.0 / pp)


def a1_ratios(idx: FamilyIndex, w: np.ndarray, u: Optional[np.ndarray] = None) -> np.ndarray:
    """avg_u w / inf_Q w per cube."""
    wn = w / np.max(w)
    avg = idx.sums(wn) / idx.counts if u is None else idx.sums(wn * u) / idx.sums(u)
    return avg / idx.reduce(wn, "min")


def rh_ratios(idx: FamilyIndex, w: np.ndarray, s: float) -> np.ndarray:
    """(avg w^s)^(1/s) / avg w per cube; s = inf uses the max over Q."""
    wn = w / np.max(w)
    avg = idx.sums(wn) / idx.counts
    if math.isinf(s):
        return idx.reduce(wn, "max") / avg
    if not s > 1:
        raise WeightError("need s > 1")
    return (idx.sums(wn ** s) / idx.counts) ** (1.0 / s) / avg


def _estimate(cls, index, theta, per_cube, family, base=None, flags=None) -> ClassConstantEstimate:
    vals = np.where(np.isnan(per_cube), -np.inf, per_cube)
    k = int(np.argmax(vals))
    value = float(vals[k])
    if not math.isfinite(value):
        value = math.inf
    return ClassConstantEstimate(cls, index, theta, value, k, family[k], base,
                                 per_cube=per_cube, flags=flags or {})


def _pen(family: CubeFamily, rho: Optional[CriticalRadiusField], theta: float) -> np.ndarray:
    if theta < 0:
        raise WeightError("theta must be nonnegative")
    return penalty(family, rho, theta)


# ---------------------------------------------------------------- public constants


def ap_constant(w: LatticeField, p: float, theta: float = 0.0, family: Optional[CubeFamily] = None,
                rho: Optional[CriticalRadiusField] = None, u: Optional[LatticeField] = None,
                ) -> ClassConstantEstimate:
    """sup_Q (avg_u w)^(1/p) (avg_u w^(1-p'))^(1/p') / (1 + r/rho)^theta."""
    ws = _positive(w, "w")
    us = None if u is None else _positive(u, "u")
    idx = _index(w, family)
    per = ap_ratios(idx, ws, p, us) / _pen(idx.family, rho, theta)
    flags = {"overflow": bool(not np.all(np.isfinite(per)))}
    return _estimate("A_p(u)", p, theta, per, idx.family, None if u is None else "u", flags)


def a1_constant(w: LatticeField, theta: float = 0.0, family: Optional[CubeFamily] = None,
                rho: Optional[CriticalRadiusField] = None, u: Optional[LatticeField] = None,
                ) -> ClassConstantEstimate:
    """sup_Q avg_u w / ((1 + r/rho)^theta inf_Q w)."""
    ws = _positive(w, "w")
    us = None if u is None else _positive(u, "u")
    idx = _index(w, family)
    per = a1_ratios(idx, ws, us) / _pen(idx.family, rho, theta)
    return _estimate("A_1(u)", math.nan, theta, per, idx.family, None if u is None else "u")


def rh_constant(w: LatticeField, s: float, theta: float = 0.0, family: Optional[CubeFamily] = None,
                rho: Optional[CriticalRadiusField] = None) -> ClassConstantEstimate:
    """sup_Q (avg w^s)^(1/s) / ((1 + r/rho)^theta avg w); s may be inf."""
    ws = _positive(w, "w")
    idx = _index(w, family)
    flags = {}
    if not math.isinf(s):
        with np.errstate(over="ignore"):
            flags["overflow"] = bool(not np.isfinite(float(np.max(ws)) ** s))
    per = rh_ratios(idx, ws, s) / _pen(idx.family, rho, theta)
    cls = "RH_inf" if math.isinf(s) else "RH_s"
    return _estimate(cls, s, theta, per, idx.family, flags=flags)


def _subset_candidates(wb: np.ndarray, scheme: str, depth: int):
    """Masks (over the block of Q) of candidate subsets E."""
    if scheme in ("level", "all"):
        flat = wb.ravel()
        for order in (np.argsort(-flat, kind="stable"), np.argsort(flat, kind="stable")):
            yield "prefix", order
    if scheme in ("dyadic", "all"):
        for lev in range(depth + 1):
            parts = [np.array_split(np.arange(n), 2 ** lev) for n in wb.shape]
            for combo in itertools.product(*parts):
                if all(len(c) for c in combo):
                    m = np.zeros(wb.shape, dtype=bool)
                    m[np.ix_(*combo)] = True
                    yield "mask", m
    if scheme == "dyadic-unions":
        parts = [np.array_split(np.arange(n), 2 ** depth) for n in wb.shape]
        cells = []
        for combo in itertools.product(*parts):
            if all(len(c) for c in combo):
                m = np.zeros(wb.shape, dtype=bool)
                m[np.ix_(*combo)] = True
                cells.append(m)
        if len(cells) > 16:
            raise WeightError("too many cells for exhaustive unions (at most 16)")
        yield "cells", cells


def ainf_eps_check(w: LatticeField, eps: float, theta: float = 0.0, family: Optional[CubeFamily] = None,
                   rho: Optional[CriticalRadiusField] = None, u: Optional[LatticeField] = None,
                   scheme: str = "all", depth: int = 4) -> ClassConstantEstimate:
    """sup over (Q, E) of [wu(E)/wu(Q)] / [(1 + r/rho)^theta (u(E)/u(Q))^eps].

    scheme: 'level' (super- and sublevel prefixes of w in Q), 'dyadic'
    (dyadic subcubes of Q down to depth), 'all' (both), or 'dyadic-unions'
    (every union of depth-level dyadic cells; at most 16 cells).
    """
    if scheme not in ("level", "dyadic", "all", "dyadic-unions"):
        raise WeightError(f"unknown subset scheme {scheme!r}")
    if not eps > 0:
        raise WeightError("eps must be positive")
    ws = _positive(w, "w")
    us = np.ones_like(ws) if u is None else _positive(u, "u")
    idx = _index(w, family)
    pen = _pen(idx.family, rho, theta)
    wn = _geo_normalize(ws)
    per = np.empty(len(idx.family))
    best_sets = []
    for k in range(len(idx.family)):
        sl = idx.slices(k)
        wb, ub = wn[sl], us[sl]
        wu = wb * ub
        WU, U = float(wu.sum()), float(ub.sum())
        best, best_set = -math.inf, None
        for kind, cand in _subset_candidates(wb, scheme, depth):
            if kind == "prefix":
                a = np.cumsum(wu.ravel()[cand]) / WU
                b = np.cumsum(ub.ravel()[cand]) / U
                r = a / b ** eps
                j = int(np.argmax(r))
                if r[j] > best:
                    best = float(r[j])
                    m = np.zeros(wb.size, dtype=bool)
                    m[cand[: j + 1]] = True
                    best_set = m.reshape(wb.shape)
            elif kind == "mask":
                r = (wu[cand].sum() / WU) / (ub[cand].sum() / U) ** eps
                if r > best:
                    best, best_set = float(r), cand
            else:
                a = np.array([wu[c].sum() for c in cand]) / WU
                b = np.array([ub[c].sum() for c in cand]) / U
                bits = ((np.arange(1, 2 ** len(cand))[:, None] >> np.arange(len(cand))) & 1).astype(float)
                r = (bits @ a) / (bits @ b) ** eps
                j = int(np.argmax(r))
                if r[j] > best:
                    best = float(r[j])
                    best_set = np.any([c for c, bit in zip(cand, bits[j]) if bit], axis=0)
        per[k] = best / pen[k]
        best_sets.append(best_set)
    est = _estimate("A_inf_eps", eps, theta, per, idx.family, None if u is None else "u",
                    {"scheme": scheme, "depth": depth})
    mask = np.zeros(w.grid.shape, dtype=bool)
    mask[idx.slices(est.witness_index)] = best_sets[est.witness_index]
    est.subset = mask
    return est


def ainf_constant(w: LatticeField, theta: float = 0.0, family: Optional[CubeFamily] = None,
                  rho: Optional[CriticalRadiusField] = None, u: Optional[LatticeField] = None,
                  ps: Sequence[float] = AINF_PS) -> ClassConstantEstimate:
    """Best A_p(u) constant over the p ladder (the union is not searchable)."""
    ests = [ap_constant(w, p, theta, family, rho, u) for p in ps]
    best = min(ests, key=lambda e: e.value)
    best.flags["ladder"] = {str(p): e.value for p, e in zip(ps, ests)}
    return best


# ---------------------------------------------------------------- refinement studies


@dataclass
class RefinementStudy:
    label: str
    hs: List[float]
    values: List[float]

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.values)

    @property
    def growth(self) -> float:
        """Largest factor between successive refinement levels (either direction)."""
        if not self.finite:
            return math.inf
        g = 1.0
        for a, b in zip(self.values, self.values[1:]):
            g = max(g, b / a, a / b)
        return g

    @property
    def slopes(self) -> List[float]:
        out = []
        for (h0, a), (h1, b) in zip(zip(self.hs, self.values), zip(self.hs[1:], self.values[1:])):
            out.append(math.log(b / a) / math.log(h0 / h1))
        return out

    def stable(self, limit: float = STABLE_GROWTH) -> bool:
        """Finite, growth below limit, and no steady power-law climb."""
        return self.finite and self.growth < limit and not self.diverges()

    def diverges(self, threshold: float = DIVERGENCE_GROWTH, min_slope: float = DIVERGENCE_SLOPE) -> bool:
        """Jump above threshold, or a steady power-law climb.

        A convergent constant has successive log-slopes that shrink toward
        zero; a divergent power law keeps them roughly constant.  We flag
        the latter when every slope is at least min_slope and no slope drops
        below 70% of the previous one.
        """
        if not self.finite:
            return True
        if self.values[-1] / self.values[0] > threshold:
            return True
        sl = self.slopes
        if not sl or min(sl) < min_slope:
            return False
        return all(b >= 0.7 * a for a, b in zip(sl, sl[1:]))

    def to_dict(self) -> dict:
        return {"label": self.label, "hs": self.hs, "values": [_num(v) for v in self.values],
                "growth": _num(self.growth)}


def refinement_study(label: str, builder: Callable[[float], float], h0: float,
                     refinements: int = 2) -> RefinementStudy:
    """Evaluate builder(h) at h0, h0/2, ... (refinements halvings)."""
    hs = [h0 / 2 ** k for k in range(refinements + 1)]
    return RefinementStudy(label, hs, [float(builder(h)) for h in hs])


# ---------------------------------------------------------------- relation suite


WeightFn = Callable[[np.ndarray], np.ndarray]


def power_weight(a: float) -> WeightFn:
    """|x|^a (use on offset lattices when a < 0)."""
    return lambda x: np.linalg.norm(x, axis=1) ** a


def bracket_weight(a: float) -> WeightFn:
    """(1 + |x|)^a."""
    return lambda x: (1.0 + np.linalg.norm(x, axis=1)) ** a


def one_weight() -> WeightFn:
    return lambda x: np.ones(x.shape[0])


@dataclass(eq=False)
class _Level:
    grid: Grid
    family: CubeFamily
    idx: FamilyIndex
    points: np.ndarray
    pen_cache: dict = field(default_factory=dict)

    def pen(self, rho, theta: float) -> np.ndarray:
        key = float(theta)
        if key not in self.pen_cache:
            self.pen_cache[key] = penalty(self.family, rho, key)
        return self.pen_cache[key]


class TestBench:
    """A fixed rho, box and lattice ladder on which relations are checked.

    Level k uses the offset lattice with n_points * 2^k points per axis and
    the exhaustive lattice-centered cube family on it.
    """

    __test__ = False  # not a pytest class

    def __init__(self, rho: Optional[CriticalRadiusField] = None, low=(-10.0,), high=(10.0,),
                 n_points: int = 512, refinements: int = 2, theta_ladder=(0.0, 1.0, 2.0, 4.0)):
        self.rho = rho if rho is not None else harmonic_rho()
        self.low = np.atleast_1d(np.asarray(low, dtype=float))
        self.high = np.atleast_1d(np.asarray(high, dtype=float))
        self.n_points = n_points
        self.refinements = refinements
        self.theta_ladder = tuple(float(t) for t in theta_ladder)
        self.levels: List[_Level] = []
        extent = float(np.max(self.high - self.low))
        for k in range(refinements + 1):
            h = extent / (n_points * 2 ** k)
            g = make_grid(self.low, self.high, h, offset=True)
            fam = exhaustive_family(g)
            self.levels.append(_Level(g, fam, FamilyIndex(g, fam), g.points()))

    @property
    def hs(self) -> List[float]:
        return [lv.grid.h for lv in self.levels]

    def sample(self, fn: WeightFn, level: _Level) -> np.ndarray:
        vals = np.asarray(fn(level.points), dtype=float).reshape(level.grid.shape)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise WeightError("bench weight must be positive and finite on the lattice")
        return vals

    def study(self, label: str, per_cube: Callable[[_Level], np.ndarray], theta: float) -> RefinementStudy:
        vals = []
        for lv in self.levels:
            r = per_cube(lv) / lv.pen(self.rho, theta)
            vals.append(float(np.max(r)) if np.all(np.isfinite(r)) else math.inf)
        return RefinementStudy(label, self.hs, vals)

    # per-cube ratio builders
    def ap(self, w: WeightFn, p: float, u: Optional[WeightFn] = None):
        return lambda lv: ap_ratios(lv.idx, self.sample(w, lv), p, None if u is None else self.sample(u, lv))

    def a1(self, w: WeightFn, u: Optional[WeightFn] = None):
        return lambda lv: a1_ratios(lv.idx, self.sample(w, lv), None if u is None else self.sample(u, lv))

    def rh(self, w: WeightFn, s: float):
        return lambda lv: rh_ratios(lv.idx, self.sample(w, lv), s)

    def fit_theta(self, label: str, per_cube) -> tuple:
        """Smallest theta on the ladder at which the constant is stable."""
        last = None
        for th in self.theta_ladder:
            st = self.study(label, per_cube, th)
            last = (th, st)
            if st.stable():
                return th, st
        return None, last[1]

    def fit_ainf(self, label: str, w: WeightFn, u: Optional[WeightFn] = None, ps=AINF_PS) -> tuple:
        """(p, theta, study) with the smallest stable A_p(u) constant over the p ladder."""
        best, last = None, None
        for p in ps:
            th, st = self.fit_theta(f"{label} A_{p:g}", self.ap(w, p, u))
            last = st
            if th is not None and (best is None or st.values[-1] < best[2].values[-1]):
                best = (p, th, st)
        return best if best is not None else (None, None, last)


@dataclass
class RelationRecord:
    id: str
    lhs: float
    rhs: float
    verdict: str  # pass | fail | precondition-fail
    detail: str = ""
    studies: List[RefinementStudy] = field(default_factory=list, repr=False)

    def to_line(self) -> str:
        return f"{self.id}\tlhs={_fmt(self.lhs)}\trhs={_fmt(self.rhs)}\tverdict={self.verdict}\t{self.detail}"

    def to_dict(self) -> dict:
        return {"id": self.id, "lhs": _num(self.lhs), "rhs": _num(self.rhs), "verdict": self.verdict,
                "detail": self.detail, "studies": [s.to_dict() for s in self.studies]}


def _fmt(x: float) -> str:
    return f"{x:.6g}" if isinstance(x, float) else str(x)


@dataclass
class RelationReport:
    records: List[RelationRecord]

    @property
    def all_pass(self) -> bool:
        return all(r.verdict == "pass" for r in self.records)

    def by_id(self, rid: str) -> RelationRecord:
        for r in self.records:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def dumps(self) -> str:
        return "\n".join(r.to_line() for r in self.records) + "\n"

    def to_json(self) -> str:
        return json.dumps([r.to_dict() for r in self.records], indent=2)


def _verdict(rid: str, hyps: Sequence[RefinementStudy], concl: RefinementStudy,
             bound: Optional[RefinementStudy] = None, detail: str = "") -> RelationRecord:
    """pass when every hypothesis and the conclusion are stable and, if a
    bound is supplied, the conclusion constant stays below it at every level."""
    studies = list(hyps) + [concl] + ([bound] if bound is not None else [])
    rhs = bound.values[-1] if bound is not None else math.nan
    bad = [h.label for h in hyps if not h.stable()]
    if bad:
        return RelationRecord(rid, concl.values[-1], rhs, "precondition-fail",
                              (detail + " unstable: " + ", ".join(bad)).strip(), studies)
    ok = concl.stable()
    if bound is not None:
        ok = ok and all(a <= b * (1 + ORDER_SLACK) for a, b in zip(concl.values, bound.values))
    return RelationRecord(rid, concl.values[-1], rhs, "pass" if ok else "fail", detail, studies)


def _product(label: str, parts: Sequence[tuple]) -> RefinementStudy:
    """Level-wise product of powered studies: prod study_i ** power_i."""
    ref = parts[0][0]
    vals = []
    for k in range(len(ref.values)):
        v = 1.0
        for st, pw in parts:
            v *= st.values[k] ** pw
        vals.append(v)
    return RefinementStudy(label, ref.hs, vals)


def _precondition_fail(rid: str, st: RefinementStudy, detail: str) -> RelationRecord:
    return RelationRecord(rid, st.values[-1], math.nan, "precondition-fail",
                          f"{detail} unstable: {st.label}", [st])


@dataclass
class BenchWeights:
    """Weight roles used by the relation suite (all positive callables)."""
    sqrt: WeightFn = field(default_factory=lambda: power_weight(0.5))
    isqrt: WeightFn = field(default_factory=lambda: power_weight(-0.5))
    bracket03: WeightFn = field(default_factory=lambda: bracket_weight(0.3))
    bracket02: WeightFn = field(default_factory=lambda: bracket_weight(0.2))


def _mul(*fns: WeightFn) -> WeightFn:
    def f(x):
        out = np.ones(x.shape[0])
        for g in fns:
            out = out * g(x)
        return out
    return f


def _pow(fn: WeightFn, a: float) -> WeightFn:
    return lambda x: fn(x) ** a


def relation_suite(bench: Optional[TestBench] = None, weights: Optional[BenchWeights] = None,
                   p: float = 2.0, s: float = 2.0, eps_self: float = 0.2, alpha: float = 0.5,
                   s_prime: float = 2.0, eps_eng: float = 0.25, beta: float = 3.0,
                   only: Optional[Sequence[str]] = None) -> RelationReport:
    """Check r1..r12 on a bench.  Records carry the finest-level constants.

    Where the argument gives an explicit per-cube inequality between
    constants (r1, r2, r3, r5, r6, r7, r9, r11) the conclusion is also
    required to stay below that bound at every level.
    """
    B = bench if bench is not None else TestBench()
    W = weights if weights is not None else BenchWeights()
    pp = p / (p - 1.0)
    recs: List[RelationRecord] = []

    def want(rid):
        return only is None or rid in only

    # r1: conjugate weight, identical constant
    if want("r1"):
        w = W.sqrt
        th, hyp = B.fit_theta("w in A_p", B.ap(w, p))
        if th is None:
            recs.append(_precondition_fail("r1", hyp, "r1"))
        else:
            concl = B.study("w^(1-p') in A_p'", B.ap(_pow(w, 1 - pp), pp), th)
            recs.append(_verdict("r1", [hyp], concl, hyp, f"p={p:g} theta={th:g}"))

    # r2: u v^(1-p) from two A_1 weights
    if want("r2"):
        u, v = W.bracket03, W.isqrt
        tu, hu = B.fit_theta("u in A_1", B.a1(u))
        tv, hv = B.fit_theta("v in A_1", B.a1(v))
        if tu is None or tv is None:
            recs.append(_verdict("r2", [hu, hv], hu))
        else:
            th = tu / p + tv / pp
            concl = B.study("u v^(1-p) in A_p", B.ap(_mul(u, _pow(v, 1 - p)), p), th)
            bound = _product("[u]^(1/p)[v]^(1/p')", [(hu, 1 / p), (hv, 1 / pp)])
            recs.append(_verdict("r2", [hu, hv], concl, bound, f"theta={th:g}"))

    # r3: power lemma, both directions
    if want("r3"):
        w = W.sqrt
        q = float(exponents.power_lemma_q(p, s))
        t2, hap = B.fit_theta("w in A_p", B.ap(w, p))
        t1, hrh = B.fit_theta("w in RH_s", B.rh(w, s))
        if t1 is None or t2 is None:
            recs.append(_verdict("r3.forward", [hap, hrh], hap))
        else:
            th = exponents.power_lemma_thetas(p, s, t1, t2)
            concl = B.study("w^s in A_q", B.ap(_pow(w, s), q), float(th["theta0"]))
            bound = _product("[w]_RH^(s/q)[w]_Ap^(ps/q)", [(hrh, s / q), (hap, p * s / q)])
            recs.append(_verdict("r3.forward", [hap, hrh], concl, bound,
                                 f"q={q:g} theta0={float(th['theta0']):g}"))
        tq, hq = B.fit_theta("w^s in A_q", B.ap(_pow(w, s), q))
        if tq is None:
            recs.append(_precondition_fail("r3.converse", hq, "r3"))
        else:
            th = exponents.power_lemma_thetas(p, s, tq, 0)
            c_ap = B.study("w in A_p", B.ap(w, p), float(th["converse_ap"]))
            b_ap = _product("[w^s]_Aq^(q/(sp))", [(hq, q / (s * p))])
            recs.append(_verdict("r3.converse-Ap", [hq], c_ap, b_ap, f"q={q:g}"))
            c_rh = B.study("w in RH_s", B.rh(w, s), float(th["converse_rh"]))
            b_rh = _product("[w^s]_Aq^(q/s)", [(hq, q / s)])
            recs.append(_verdict("r3.converse-RH", [hq], c_rh, b_rh, f"q={q:g}"))

    # r4: self-improvement of A_1
    if want("r4"):
        u = W.isqrt
        th, hyp = B.fit_theta("u in A_1", B.a1(u))
        if th is None:
            recs.append(_precondition_fail("r4", hyp, "r4"))
        else:
            tc, concl = B.fit_theta("u^(1+eps) in A_1", B.a1(_pow(u, 1 + eps_self)))
            recs.append(_verdict("r4", [hyp], concl, None, f"eps={eps_self:g}"))

    # r5: negative powers of A_1 weights
    if want("r5"):
        w = W.isqrt
        th, hyp = B.fit_theta("w in A_1", B.a1(w))
        if th is None:
            recs.append(_precondition_fail("r5", hyp, "r5"))
        else:
            wneg = _pow(w, 1 - p)
            c_ap = B.study("w^(1-p) in A_p", B.ap(wneg, p), th / pp)
            recs.append(_verdict("r5.Ap", [hyp], c_ap, _product("[w]_A1^(1/p')", [(hyp, 1 / pp)])))
            c_rh = B.study("w^(1-p) in RH_inf", B.rh(wneg, math.inf), (p - 1) * th)
            recs.append(_verdict("r5.RHinf", [hyp], c_rh, _product("[w]_A1^(p-1)", [(hyp, p - 1)])))
            r = 1.0
            c_r = B.study("w^(-r) in RH_inf", B.rh(_pow(w, -r), math.inf), r * th)
            recs.append(_verdict("r5.corollary", [hyp], c_r, _product("[w]_A1^r", [(hyp, r)]), f"r={r:g}"))

    # r6: product of averages
    if want("r6"):
        u, v = W.sqrt, W.bracket03
        t1, hu = B.fit_theta("u in A_p", B.ap(u, p))
        t2, hv = B.fit_theta("v in A_p'", B.ap(v, pp))
        if t1 is None or t2 is None:
            recs.append(_verdict("r6", [hu, hv], hu))
        else:
            def per(lv):
                us, vs = B.sample(u, lv), B.sample(v, lv)
                c = lv.idx.counts
                return ((lv.idx.sums(us) / c) ** (1 / p) * (lv.idx.sums(vs) / c) ** (1 / pp)
                        / (lv.idx.sums(us ** (1 / p) * vs ** (1 / pp)) / c))
            concl = B.study("avg u^(1/p) avg v^(1/p') / avg(u^(1/p) v^(1/p'))", per, t1 + t2)
            recs.append(_verdict("r6", [hu, hv], concl, _product("[u]_Ap[v]_Ap'", [(hu, 1), (hv, 1)])))

    # r7: RH_s versus A_inf of the s-th power
    if want("r7"):
        w = W.sqrt
        t1, hrh = B.fit_theta("w in RH_s", B.rh(w, s))
        if t1 is None:
            recs.append(_precondition_fail("r7.forward", hrh, "r7"))
        else:
            q7, tq, concl = B.fit_ainf("w^s in A_inf", _pow(w, s))
            recs.append(_verdict("r7.forward", [hrh], concl, None,
                                 f"p_star={q7}" if q7 is not None else "no stable p"))
            eps = 1.0 - 1.0 / s
            vals = []
            for lv in B.levels:
                fld = LatticeField(lv.grid, B.sample(w, lv))
                vals.append(ainf_eps_check(fld, eps, t1, lv.family, B.rho, scheme="level").value)
            ce = RefinementStudy("w eps-condition, eps = 1/s'", B.hs, vals)
            recs.append(_verdict("r7.eps-bound", [hrh], ce, hrh, f"eps={eps:g}"))
        q7, tq, hq = B.fit_ainf("w^s in A_inf", _pow(w, s))
        if q7 is None:
            recs.append(_precondition_fail("r7.converse", hq, "r7"))
        else:
            tc, concl = B.fit_theta("w in RH_s", B.rh(w, s))
            recs.append(_verdict("r7.converse", [hq], concl, None, f"p_star={q7:g}"))

    # r8: reverse Hoelder products
    if want("r8"):
        u, v = W.sqrt, W.bracket02
        tu, hu = B.fit_theta("u in RH_p", B.rh(u, p))
        tv, hv = B.fit_theta("v in RH_p'", B.rh(v, pp))
        if tu is None or tv is None:
            recs.append(_verdict("r8", [hu, hv], hu))
        else:
            def per(lv):
                us, vs = B.sample(u, lv), B.sample(v, lv)
                us, vs = us / us.max(), vs / vs.max()
                c = lv.idx.counts
                return ((lv.idx.sums(us ** p) / c) ** (1 / p) * (lv.idx.sums(vs ** pp) / c) ** (1 / pp)
                        / (lv.idx.sums(us * vs) / c))
            tc, concl = B.fit_theta("RH product inequality", per)
            recs.append(_verdict("r8", [hu, hv], concl))
        u2, v2 = W.bracket02, W.sqrt
        tu, hu = B.fit_theta("u in RH_inf", B.rh(u2, math.inf))
        tv, hv = B.fit_theta("v in RH_inf", B.rh(v2, math.inf))
        if tu is None or tv is None:
            recs.append(_verdict("r8.corollary", [hu, hv], hu))
        else:
            tc, concl = B.fit_theta("uv in RH_inf", B.rh(_mul(u2, v2), math.inf))
            recs.append(_verdict("r8.corollary", [hu, hv], concl))

    # r9: uv in A_p from u in A_1 and v in A_p(u)
    if want("r9"):
        u, v = W.isqrt, W.bracket02
        t2, hu = B.fit_theta("u in A_1", B.a1(u))
        t1, hv = B.fit_theta("v in A_p(u)", B.ap(v, p, u))
        if t1 is None or t2 is None:
            recs.append(_verdict("r9", [hu, hv], hu))
        else:
            concl = B.study("uv in A_p", B.ap(_mul(u, v), p), t1 + t2)
            recs.append(_verdict("r9", [hu, hv], concl, _product("[u]_A1[v]_Ap(u)", [(hu, 1), (hv, 1)])))

    # r10: u in A_1(v) from u in A_1 and uv in A_inf
    if want("r10"):
        u, v = W.isqrt, W.bracket02
        tu, hu = B.fit_theta("u in A_1", B.a1(u))
        q10, tq, huv = B.fit_ainf("uv in A_inf", _mul(u, v))
        if tu is None or q10 is None:
            recs.append(_verdict("r10", [hu, huv], hu))
        else:
            tc, concl = B.fit_theta("u in A_1(v)", B.a1(u, v))
            recs.append(_verdict("r10", [hu, huv], concl, None, f"p_star={q10:g}"))

    # r11: base change u -> u^alpha
    if want("r11"):
        u, v = W.isqrt, W.bracket02
        t1, hr = B.fit_theta("u^(alpha-1) in RH_inf", B.rh(_pow(u, alpha - 1), math.inf))
        t2, hu = B.fit_theta("u in A_1", B.a1(u))
        t3, hv = B.fit_theta("v in A_p(u)", B.ap(v, p, u))
        if None in (t1, t2, t3):
            recs.append(_verdict("r11", [hr, hu, hv], hr))
        else:
            concl = B.study("v in A_p(u^alpha)", B.ap(v, p, _pow(u, alpha)), t1 + t2 + t3)
            bound = _product("[u^(alpha-1)]_RHinf[u]_A1[v]_Ap(u)", [(hr, 1), (hu, 1), (hv, 1)])
            recs.append(_verdict("r11", [hr, hu, hv], concl, bound, f"alpha={alpha:g}"))

    # r12: exponent engineering, exact arithmetic plus membership
    if want("r12"):
        eng = exponents.exponent_engineering(s_prime, eps_eng)
        exact = eng["alpha_identity"] and eng["ratio_identity"] and eng["gap_identity"]
        recs.append(RelationRecord("r12.identities", float(eng["alpha"]), float(s_prime * (1 + eps_eng)),
                                   "pass" if exact else "fail",
                                   f"q'={exponents.render(eng['q_prime'])} alpha={exponents.render(eng['alpha'])}"))
        u, v = W.bracket02, W.bracket03
        qp = float(eng["q_prime"])
        t1, h1 = B.fit_theta("u^s' in A_1", B.a1(_pow(u, s_prime)))
        t2, h2 = B.fit_theta("u^(s'(1+eps)) in A_1", B.a1(_pow(u, float(eng["alpha"]))))
        q12, tq, h3 = B.fit_ainf("v in A_inf(u^beta)", v, _pow(u, beta))
        hyps = [h1, h2, h3]
        if None in (t1, t2, q12) or not beta > s_prime:
            recs.append(_verdict("r12", hyps, h1))
        else:
            tc, concl = B.fit_theta("u^(1-q') v in A_(q'/s')",
                                    B.ap(_mul(_pow(u, 1 - qp), v), qp / s_prime))
            recs.append(_verdict("r12", hyps, concl, None, f"class index {qp / s_prime:g}"))
    return RelationReport(recs)


# ---------------------------------------------------------------- Rubio de Francia


@dataclass(eq=False)
class RubioResult:
    weight: LatticeField
    operator_ratio: float
    iterations: int
    a1_value: float
    ratios: List[float]


def rubio_de_francia_a1(w: LatticeField, rho: Optional[CriticalRadiusField], theta: float, K: int = 20,
                        family: Optional[CubeFamily] = None, ratio_limit: float = 1.0 + 1e-9) -> RubioResult:
    """R(w) = sum_{k <= K} M^k w / (2 Lam)^k with M = M^{rho, theta}.

    Lam is the measured sup-norm ratio max_k ||M^{k+1} w|| / ||M^k w||,
    floored at 1.  Penalized averages never exceed the sup, so a ratio above
    ratio_limit means the iteration is not contracting and is an error.
    R >= w pointwise (k = 0 term) and its A_1 constant is at most about 2.
    """
    if K < 1:
        raise WeightError("need K >= 1")
    ws = _positive(w, "w")
    family = family if family is not None else exhaustive_family(w.grid)
    iterates = [ws]
    ratios = []
    cur = w
    for _ in range(K):
        cur = m_rho_sigma(cur, rho, theta, family).values
        ratios.append(float(np.max(cur.samples) / np.max(iterates[-1])))
        iterates.append(cur.samples)
    lam = max(1.0, max(ratios))
    if lam > ratio_limit:
        raise WeightError("divergent iteration: operator ratio above 1")
    total = np.zeros_like(ws)
    for k, it in enumerate(iterates):
        total = total + it / (2.0 * lam) ** k
    R = w.with_samples(total)
    val = a1_constant(R, theta, family, rho).value
    return RubioResult(R, lam, K, val, ratios)
