"""Sets of sequences with a finite interval head and a geometric tail.

A ``GeometricBound`` with head length ``mh``, constant ``C`` and ratio
``q > 1`` represents

    { a : a_k in head_k for k <= mh,  |a_k| <= C q^{-k} for k > mh }.

``PolyGeometricBound`` represents the weaker envelope |b_k| <= P(k) q^{-k}
with a nonnegative polynomial P; it shows up as the image of a geometric
set under the quadratic nonlinearity and is pushed back to a plain
geometric tail by ``geometric_reduce``.

Ratios are exact rationals so that tail comparisons and geometric series
are evaluated without rounding.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .intervals import IArray, Interval, IntervalError, ZERO, frac_pow_interval


class TailError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Exact rational series helpers
# ---------------------------------------------------------------------------

def _power_moments(x: Fraction, rmax: int):
    """A_r(x) = sum_{k>=0} k^r x^k for r = 0..rmax, exact rationals (0<x<1)."""
    one = Fraction(1)
    a = [one / (one - x)]
    for r in range(1, rmax + 1):
        s = Fraction(0)
        for i in range(r):
            s += math.comb(r, i) * a[i]
        a.append(x / (one - x) * s)
    return a


def moment_sum_from(r: int, x: Fraction, k0: int) -> Fraction:
    """sum_{k>=k0} k^r x^k, exact (requires 0 < x < 1, k0 >= 0)."""
    if not (0 < x < 1):
        raise TailError("ratio outside (0,1)")
    full = _power_moments(x, r)[r]
    partial = sum(Fraction(k) ** r * x ** k for k in range(k0)) if r > 0 else \
        sum(x ** k for k in range(k0))
    return full - partial


def geom_sum_from(q: Fraction, k0: int) -> Fraction:
    """sum_{k>=k0} q^{-k} exact, q > 1."""
    x = Fraction(1) / Fraction(q)
    return x ** k0 / (1 - x)


def poly_geom_sum_from(coeffs, x: Fraction, k0: int) -> Interval:
    """Enclosure of sum_{k>=k0} P(k) x^k with interval coefficients of P."""
    out = ZERO
    for r, c in enumerate(coeffs):
        c = c if isinstance(c, Interval) else Interval(float(c))
        out = out + c * Interval.from_fraction(moment_sum_from(r, x, k0))
    return out


# ---------------------------------------------------------------------------
# q^{-k} cache
# ---------------------------------------------------------------------------

_QPOW_CACHE: dict = {}


def qpow(q: Fraction, k: int) -> Interval:
    """Tight interval for q**k (k any sign), cached."""
    key = (q, k)
    got = _QPOW_CACHE.get(key)
    if got is None:
        got = frac_pow_interval(q, k)
        _QPOW_CACHE[key] = got
    return got


# ---------------------------------------------------------------------------
# GeometricBound
# ---------------------------------------------------------------------------

class GeometricBound:
    """Finitely many interval modes plus a geometric tail |a_k| <= C q^{-k}."""

    __slots__ = ("head", "C", "q")

    def __init__(self, head: IArray, C: Interval, q: Fraction):
        q = Fraction(q)
        if q <= 1:
            raise TailError("tail ratio must exceed 1")
        if isinstance(C, (int, float)):
            C = Interval(float(C))
        if C.hi < 0:
            raise TailError("negative tail constant")
        self.head = head
        self.C = Interval(max(C.lo, 0.0), C.hi)
        self.q = q

    # -- constructors --------------------------------------------------------

    @staticmethod
    def zero(mh: int, q) -> "GeometricBound":
        return GeometricBound(IArray.zeros((mh,)), ZERO, q)

    @staticmethod
    def from_point(values, q, C=ZERO) -> "GeometricBound":
        v = np.asarray(values, dtype=np.float64)
        return GeometricBound(IArray(v, v.copy(), copy=False), C, q)

    @property
    def mh(self) -> int:
        return len(self.head)

    def copy(self) -> "GeometricBound":
        return GeometricBound(self.head.copy(), self.C, self.q)

    def __repr__(self):
        return f"GeometricBound(mh={self.mh}, C={self.C!r}, q={self.q})"

    # -- reads ---------------------------------------------------------------

    def entry(self, k: int) -> Interval:
        """Interval enclosure of mode k (1-based)."""
        if k < 1:
            raise TailError("modes are 1-based")
        if k <= self.mh:
            return self.head.at(k - 1)
        bound = (self.C * qpow(self.q, -k)).hi
        return Interval(-bound, bound)

    def sup(self, k: int) -> float:
        if k <= self.mh:
            return self.head.at(k - 1).mag()
        return (self.C * qpow(self.q, -k)).hi

    def sup_vector(self, upto: int) -> np.ndarray:
        """Componentwise sup |a_k| for k = 1..upto (float upper bounds)."""
        out = np.empty(upto)
        n = min(upto, self.mh)
        out[:n] = self.head.slice(slice(0, n)).mag()
        for k in range(n + 1, upto + 1):
            out[k - 1] = (self.C * qpow(self.q, -k)).hi
        return out

    def sup_tail_sum_from(self, k0: int) -> Interval:
        """Upper enclosure of sum_{k>=k0} sup|a_k|."""
        total = ZERO
        if k0 <= self.mh:
            s = self.head.slice(slice(k0 - 1, self.mh)).mag()
            acc = IArray(s, s.copy(), copy=False).sum(axis=0)
            total = total + Interval(0.0, acc.hi)
        start = max(k0, self.mh + 1)
        total = total + Interval(0.0, self.C.hi) * Interval.from_fraction(
            geom_sum_from(self.q, start))
        return Interval(0.0, total.hi)

    def global_S(self) -> float:
        """Upper bound S with the whole set inside { |a_k| <= S q^{-k} }."""
        s = self.C.hi
        for k in range(1, self.mh + 1):
            s = max(s, (Interval(self.sup(k)) * qpow(self.q, k)).hi)
        return s

    def extend_head(self, new_mh: int) -> "GeometricBound":
        """Materialize tail modes into the head up to new_mh."""
        if new_mh <= self.mh:
            return self
        ext = [self.head.at(i) for i in range(self.mh)]
        ext += [self.entry(k) for k in range(self.mh + 1, new_mh + 1)]
        return GeometricBound(IArray.from_intervals(ext), self.C, self.q)

    # -- set relations -------------------------------------------------------

    def contains(self, inner: "GeometricBound") -> bool:
        """True certifies set inclusion; may conservatively reject when the
        decay ratios differ."""
        if inner.q < self.q and inner.C.hi > 0.0:
            raise TailError("incomparable tails: inner ratio decays slower")
        mh = max(self.mh, inner.mh)
        a = self.extend_head(mh)
        b = inner.extend_head(mh)
        if not b.head.subset(a.head):
            return False
        if inner.q == self.q:
            return b.C.hi <= a.C.hi
        # inner decays strictly faster: worst index is mh + 1
        k = mh + 1
        ib = (b.C * qpow(b.q, -k)).hi
        ob = (a.C * qpow(a.q, -k)).lo
        return ib <= ob

    def member_sample(self, rng, upto: int) -> np.ndarray:
        """A finite sample (modes 1..upto) of some member sequence."""
        out = np.empty(upto)
        for k in range(1, upto + 1):
            e = self.entry(k)
            out[k - 1] = rng.uniform(e.lo, e.hi)
        return out

    def is_member_prefix(self, a: np.ndarray) -> bool:
        """Check the defining inequalities on the given finite prefix."""
        for k in range(1, len(a) + 1):
            e = self.entry(k)
            if not (e.lo <= a[k - 1] <= e.hi):
                return False
        return True

    # -- algebra --------------------------------------------------------------

    def __add__(self, other: "GeometricBound") -> "GeometricBound":
        if self.q != other.q:
            raise TailError("mismatched tail ratios in sum")
        mh = max(self.mh, other.mh)
        a = self.extend_head(mh)
        b = other.extend_head(mh)
        return GeometricBound(a.head + b.head, Interval(0.0, (a.C + b.C).hi), self.q)

    def scale(self, s) -> "GeometricBound":
        s = s if isinstance(s, Interval) else Interval(float(s))
        return GeometricBound(self.head * s,
                              Interval(0.0, (self.C * Interval(s.mag())).hi), self.q)

    def hull(self, other: "GeometricBound") -> "GeometricBound":
        if self.q != other.q:
            raise TailError("mismatched tail ratios in hull")
        mh = max(self.mh, other.mh)
        a = self.extend_head(mh)
        b = other.extend_head(mh)
        return GeometricBound(a.head.hull(b.head),
                              Interval(0.0, max(a.C.hi, b.C.hi)), self.q)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "m": self.mh,
            "q": str(self.q),
            "head": self.head.to_lists(),
            "C": self.C.to_strings(),
        }

    @staticmethod
    def from_dict(d) -> "GeometricBound":
        return GeometricBound(IArray.from_lists(d["head"]),
                              Interval.from_strings(d["C"]),
                              Fraction(d["q"]))


# ---------------------------------------------------------------------------
# PolyGeometricBound and geometric reduction
# ---------------------------------------------------------------------------

class PolyGeometricBound:
    """Envelope |b_k| <= P(k) q^{-k} with nonnegative interval coefficients."""

    __slots__ = ("coeffs", "q")

    def __init__(self, coeffs, q: Fraction):
        q = Fraction(q)
        if q <= 1:
            raise TailError("ratio must exceed 1")
        cs = []
        for c in coeffs:
            c = c if isinstance(c, Interval) else Interval(float(c))
            if c.lo < 0:
                c = Interval(0.0, c.hi)
            if c.hi < 0:
                raise TailError("negative polynomial coefficient")
            cs.append(c)
        while len(cs) > 1 and cs[-1].hi == 0.0:
            cs.pop()
        self.coeffs = cs
        self.q = q

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def poly_at(self, k: int) -> Interval:
        out = ZERO
        kk = Interval(float(k))
        for c in reversed(self.coeffs):
            out = out * kk + c
        return out

    def value_at(self, k: int) -> Interval:
        """Upper envelope P(k) q^{-k} at mode k."""
        return self.poly_at(k) * qpow(self.q, -k)

    def __add__(self, other: "PolyGeometricBound") -> "PolyGeometricBound":
        if self.q != other.q:
            raise TailError("mismatched ratios")
        n = max(len(self.coeffs), len(other.coeffs))
        cs = []
        for i in range(n):
            a = self.coeffs[i] if i < len(self.coeffs) else ZERO
            b = other.coeffs[i] if i < len(other.coeffs) else ZERO
            cs.append(a + b)
        return PolyGeometricBound(cs, self.q)

    def scale(self, s: Interval) -> "PolyGeometricBound":
        s = Interval(0.0, s.mag()) if not isinstance(s, Interval) else s
        return PolyGeometricBound([c * Interval(s.mag()) for c in self.coeffs], self.q)


def geometric_reduce(bound: PolyGeometricBound, delta: Fraction):
    """Dominate P(k) q^{-k} by C' (q/delta)^{-k}.

    C' >= sup_k P(k) delta^{-k}; for nonnegative coefficients the ratio
    P(k+1)/P(k) is at most (1+1/k)^d, so past the first K with
    (K+1)^d <= delta K^d the sequence decreases and the sup is attained on
    the finite prefix.
    """
    delta = Fraction(delta)
    if not (1 < delta < bound.q):
        raise TailError("delta outside (1, q)")
    d = bound.degree
    K = 1
    if d > 0:
        while (K + 1) ** d > delta * K ** d:
            K += 1
            if K > 10 ** 7:
                raise TailError("no turnover index found")
    best = ZERO
    x = Fraction(1) / delta
    for k in range(1, K + 1):
        v = bound.poly_at(k) * Interval.from_fraction(x ** k)
        if v.hi > best.hi:
            best = v
    cprime = Interval(max(best.lo, 0.0), best.hi)
    return cprime, bound.q / delta


def default_delta_grid(q: Fraction, n: int = 8):
    """Deterministic grid of reduction ratios inside (1, q)."""
    q = Fraction(q)
    out = []
    for i in range(1, n + 1):
        # rational stand-in for q**(i/(n+1))
        approx = Fraction(float(q) ** (i / (n + 1))).limit_denominator(1000)
        if 1 < approx < q:
            out.append(approx)
    if not out:
        out = [1 + (q - 1) / 2]
    return out


def best_geometric_reduce(bound: PolyGeometricBound, grid=None):
    """Pick the grid delta whose reduction gives the smallest constant."""
    grid = grid or default_delta_grid(bound.q)
    best = None
    for delta in grid:
        if not (1 < delta < bound.q):
            continue
        c, qq = geometric_reduce(bound, delta)
        if best is None or c.hi < best[0].hi:
            best = (c, qq, delta)
    if best is None:
        raise TailError("empty delta grid")
    return best
