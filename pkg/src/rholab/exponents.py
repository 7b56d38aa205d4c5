"""Exact exponent bookkeeping with rational arithmetic.

Inputs may be ints, Fractions, decimal strings or floats; floats are
converted with limit_denominator so that 0.25 becomes 1/4.  Infinity is
represented by math.inf.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

Number = Union[int, float, str, Fraction]
INF = math.inf


class ExponentError(ValueError):
    pass


def as_fraction(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ExponentError("infinite exponent where a finite one is required")
        return Fraction(x).limit_denominator(10 ** 9)
    return Fraction(x)


def conjugate(p: Number):
    """p' = p / (p - 1); the conjugate of infinity is 1 and of 1 is infinity."""
    if p == INF:
        return Fraction(1)
    p = as_fraction(p)
    if p < 1:
        raise ExponentError("conjugate needs p >= 1")
    if p == 1:
        return INF
    return p / (p - 1)


def power_lemma_q(p: Number, s: Number) -> Fraction:
    """q = s(p - 1) + 1, the class index of w^s for w in A_p intersect RH_s."""
    p, s = as_fraction(p), as_fraction(s)
    if p <= 1 or s <= 1:
        raise ExponentError("need p > 1 and s > 1")
    return s * (p - 1) + 1


def power_lemma_thetas(p: Number, s: Number, theta_rh: Number, theta_ap: Number) -> dict:
    """Growth exponents carried through the power lemma.

    forward: w in RH_s^{theta_rh} and A_p^{theta_ap} gives w^s in
    A_q^{theta0} with theta0 = p s theta_ap / q + s theta_rh / q.
    converse: w^s in A_q^{theta_rh} gives w in A_p^{q theta/(s p)} and
    RH_s^{q theta / s}.
    """
    p, s = as_fraction(p), as_fraction(s)
    t1, t2 = as_fraction(theta_rh), as_fraction(theta_ap)
    q = power_lemma_q(p, s)
    return {
        "q": q,
        "theta0": p * s * t2 / q + s * t1 / q,
        "converse_ap": q * t1 / (s * p),
        "converse_rh": q * t1 / s,
    }


def exponent_engineering(s_prime: Number, eps: Number) -> dict:
    """q' = (s'(1+eps) - 1)/eps and alpha = s'(q' - 1)/(q' - s'), with the
    identities alpha = s'(1 + eps), q'/s' = 1 + 1/(s eps) and
    q' - s' = (s' - 1)/eps checked exactly."""
    sp, e = as_fraction(s_prime), as_fraction(eps)
    if sp <= 1 or e <= 0:
        raise ExponentError("need s' > 1 and eps > 0")
    qp = (sp * (1 + e) - 1) / e
    alpha = sp * (qp - 1) / (qp - sp)
    s = conjugate(sp)
    return {
        "q_prime": qp,
        "alpha": alpha,
        "q": conjugate(qp),
        "class_index": qp / sp,
        "alpha_identity": alpha == sp * (1 + e),
        "ratio_identity": qp / sp == 1 + 1 / (s * e),
        "gap_identity": qp - sp == (sp - 1) / e,
    }


def _inv(x: Fraction):
    return INF if x == 0 else 1 / x


def exponent_table(q: Number, d: int, gamma: Number) -> dict:
    """Types of the Schrodinger-type operators for V in RH_q, q > d/2, d >= 3.

    p0: first-order Riesz transform, 1/p0 = 1/q - 1/d (infinite when q >= d);
    q_for_R2: second-order Riesz transform; q_over_gamma: V^gamma L^-gamma
    with 0 < gamma < d/2; q_gamma: V^(gamma-1/2) grad L^-gamma with
    1/q_gamma = (1/q - 1/d)^+ + (2 gamma - 1)/(2 q), 1/2 < gamma <= 1.
    Entries whose parameter range excludes gamma are None.
    """
    if d < 3:
        raise ExponentError("dimension must be at least 3")
    qf = as_fraction(q)
    g = as_fraction(gamma)
    if not qf > Fraction(d, 2):
        raise ExponentError("need q > d/2")
    inv_p0 = 1 / qf - Fraction(1, d)
    out = {
        "p0": INF if inv_p0 <= 0 else _inv(inv_p0),
        "q_for_R2": qf,
        "q_over_gamma": qf / g if 0 < g < Fraction(d, 2) else None,
        "q_gamma": None,
    }
    if Fraction(1, 2) < g <= 1:
        inv = max(inv_p0, Fraction(0)) + (2 * g - 1) / (2 * qf)
        out["q_gamma"] = _inv(inv)
    return out


def render(x) -> str:
    if x is None:
        return "n/a"
    if x == INF:
        return "inf"
    if isinstance(x, Fraction) and x.denominator == 1:
        return str(x.numerator)
    return str(x)
