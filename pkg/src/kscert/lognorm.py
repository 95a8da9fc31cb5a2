"""Logarithmic norms, rigorous e^{Jt} upper bounds and comparison propagation.

``J`` is always a Metzler comparison matrix: off-diagonal entries bound the
operator norms of the corresponding blocks of some linear non-autonomous
system, diagonal entries bound logarithmic norms.  Then solutions W of
W' = A(t) W with blocks dominated by J satisfy ||W_ij(t)|| <= (e^{Jt} B0)_ij,
so a componentwise upper bound of e^{Jt} turns into certified norm bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .intervals import (IArray, Interval, IntervalError, iexp, iexpm1_over,
                        mr_matmul, mr_add, mr_scale, mr_from_iarray,
                        mr_to_iarray, _sum_up)


class StepTooLarge(RuntimeError):
    """Raised when the Taylor remainder cannot be controlled: split the time step."""


@dataclass(frozen=True)
class JMatrix:
    """Point Metzler matrix of upper bounds (floats)."""
    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("J must be square")
        off = a - np.diag(np.diag(a))
        if np.any(off < 0.0):
            raise ValueError("off-diagonal entries must be nonnegative (Metzler)")
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def log_norm_max(a: IArray) -> Interval:
    """Logarithmic norm induced by the sup norm: max_i (A_ii + sum_{k!=i}|A_ik|)."""
    n = a.shape[0]
    if a.lo.ndim != 2 or a.shape[0] != a.shape[1]:
        raise IntervalError("square matrix expected")
    rows = []
    for i in range(n):
        acc = a.at(i, i)
        for k in range(n):
            if k != i:
                acc = acc + a.at(i, k).abs()
        rows.append(acc)
    return Interval(max(r.lo for r in rows), max(r.hi for r in rows))


def _as_matrix(j) -> np.ndarray:
    if isinstance(j, JMatrix):
        return j.entries
    a = np.asarray(j, dtype=np.float64)
    return JMatrix(a).entries  # validates


def _expm_taylor(jm: np.ndarray, t: Interval, order: int):
    """(enclosure of the degree-`order` Taylor sum of e^{Jt'} over t' in t,
    componentwise remainder matrix, its largest entry)."""
    n = jm.shape[0]
    accm, accr = np.eye(n), np.zeros((n, n))
    pm, pr = np.eye(n), np.zeros((n, n))
    dm = _mr_up(np.abs(jm) * t.hi)           # |J| t, componentwise upper
    dp = np.eye(n)
    fact = 1.0
    for k in range(1, order + 1):
        pm, pr = mr_matmul(pm, pr, jm, np.zeros_like(jm))
        dp = _mr_up(dp @ dm)
        fact *= k
        tp = Interval(max(t.lo, 0.0)).ipow(k).hull(Interval(t.hi).ipow(k))
        tm, tr = mr_scale(pm, pr, tp / Interval(fact))
        accm, accr = mr_add(accm, accr, tm, tr)
    # componentwise tail bound: sum_{k>p} D^k/k! <= D^{p+1}/(p+1)! e^D
    # (entrywise, all matrices nonnegative); e^D is closed by the partial
    # sum of e^D plus the classical scalar bound on its own tail
    rho = float(np.max(_sum_up(dm, 1)))
    p1 = order + 1
    lead = Interval(rho).ipow(p1) / Interval(float(math.factorial(p1)))
    scal = (lead * iexp(Interval(rho))).hi
    if not math.isfinite(scal):
        return mr_to_iarray(accm, accr), np.full((n, n), math.inf), math.inf
    sexp = np.eye(n)
    dpow = np.eye(n)
    fact = 1.0
    for k in range(1, order + 1):
        dpow = _mr_up(dpow @ dm)
        fact *= k
        sexp = _mr_up(sexp + dpow / fact)
    sexp = _mr_up(sexp + scal)
    dlead = _mr_up(_mr_up(dp @ dm) / float(math.factorial(p1)))
    rem = _mr_up(dlead @ sexp)
    return mr_to_iarray(accm, accr), rem, float(np.max(rem))


def _mr_up(a):
    """Strict componentwise upper inflation of nonnegative float results."""
    return np.nextafter(a * (1.0 + 1e-12), math.inf)


def expm_upper(j, t, order: int = 20, max_splits: int = 60) -> IArray:
    """Componentwise enclosure of e^{J t'} valid for every t' in t, entries
    clamped to be nonnegative (legitimate for Metzler J).

    Splits the step, using e^{Jt} = (e^{Jt/2})^2 on nonnegative upper bounds,
    until the Taylor remainder is below 1e-3 of the largest partial-sum
    entry; raises StepTooLarge when splitting cannot tame it.
    """
    if not isinstance(t, Interval):
        t = Interval(float(t))
    if t.lo < 0.0:
        raise IntervalError("nonnegative time required")
    jm = _as_matrix(j)
    for s in range(max_splits + 1):
        scale = 2.0 ** (-s)
        ts = t * Interval(scale)
        acc, rem, rem_top = _expm_taylor(jm, ts, order)
        top = float(np.max(np.abs(acc.hi)))
        if rem_top <= 1e-3 * max(top, 1.0) and math.isfinite(rem_top):
            out = acc + IArray(-rem, rem.copy(), copy=False)
            out = IArray(np.maximum(out.lo, 0.0), np.maximum(out.hi, 0.0),
                         copy=False)
            for _ in range(s):
                om, orad = mr_from_iarray(out)
                om, orad = mr_matmul(om, orad, om, orad)
                out = mr_to_iarray(om, orad)
                out = IArray(np.maximum(out.lo, 0.0), out.hi, copy=False)
                if not np.all(np.isfinite(out.hi)):
                    raise StepTooLarge("split the time step")
            return out
    raise StepTooLarge("split the time step")


def defect_bound(l: float, delta: float, d0: float, t: float) -> float:
    """Upper bound of e^{lt} d0 + delta (e^{lt}-1)/l (d0 + delta t at l = 0)."""
    if delta < 0 or d0 < 0 or t < 0:
        raise ValueError("delta, d0, t must be nonnegative")
    lt = Interval(l) * Interval(t)
    growth = iexp(lt) * Interval(d0)
    drift = Interval(delta) * Interval(t) * iexpm1_over(lt)
    return (growth + drift).hi


def propagate_norm_vector(j, t, z, order: int = 20) -> np.ndarray:
    """Upper bounds (e^{Jt} z)_i for a nonnegative vector z."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0.0):
        raise ValueError("z must be componentwise nonnegative")
    u = expm_upper(j, t, order=order)
    out = u.dot(IArray(z, z.copy(), copy=False))
    return out.hi.copy()


def expm_upper_matrix_bound(j, t, b0: np.ndarray, order: int = 20) -> np.ndarray:
    """Upper bounds (e^{Jt} B0)_ij for a nonnegative matrix B0 of initial norms."""
    b0 = np.asarray(b0, dtype=np.float64)
    if np.any(b0 < 0.0):
        raise ValueError("B0 must be componentwise nonnegative")
    u = expm_upper(j, t, order=order)
    return u.dot(IArray(b0, b0.copy(), copy=False)).hi.copy()
