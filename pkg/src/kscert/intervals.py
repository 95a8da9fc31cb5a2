"""Outward-rounded interval arithmetic for scalars, vectors and matrices.

Rounding model
--------------
IEEE-754 binary64 throughout.  Directed rounding is realized by "next-after"
endpoint nudging, not by switching the FPU rounding mode, so values are safe
to share between threads.  For ``+``, ``-`` and ``*`` the rounding error of
the double operation is recovered *exactly* (TwoSum / Dekker's TwoProd), so
an endpoint is nudged only when the double result actually differs from the
real one.  In particular exact operations stay exact: ``0*x == 0``,
``Id @ v == v``, ``[1,2]+[3,4] == [4,6]``.  Division and the elementary
functions nudge unconditionally unless the result is provably exact.

Sums of more than two terms (dot products, matrix products) are reduced by a
compensated cascade whose accumulated correction is itself tracked with
directed rounding, which keeps the result both rigorous and exact for exact
data.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

_INF = math.inf

# Dekker splitting constant for binary64 and the subnormal guard band below
# which the TwoProd error term can no longer be trusted to be exact.
_SPLIT = 134217729.0  # 2**27 + 1
_TINY = 2.0 ** -1000


class IntervalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Vectorized endpoint primitives on plain float arrays.
# ---------------------------------------------------------------------------

def _nudge_down(x):
    return np.nextafter(x, -_INF)


def _nudge_up(x):
    return np.nextafter(x, _INF)


def _two_sum(a, b):
    """s, e with a + b == s + e exactly (no overflow assumed)."""
    s = a + b
    bp = s - a
    ap = s - bp
    e = (a - ap) + (b - bp)
    return s, e


def _two_prod(a, b):
    """p, e with a * b == p + e exactly, and a flag where e is untrusted."""
    p = a * b
    ah = _SPLIT * a
    ah = ah - (ah - a)
    al = a - ah
    bh = _SPLIT * b
    bh = bh - (bh - b)
    bl = b - bh
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    # Near the subnormal range (or on overflow of the splitting) the error
    # term may itself have rounded; treat those entries as inexact.
    bad = (np.abs(p) < _TINY) & (p != 0.0)
    bad |= ~np.isfinite(p)
    bad |= (p == 0.0) & (a != 0.0) & (b != 0.0)
    return p, e, bad


def _add_down(a, b):
    s, e = _two_sum(a, b)
    return np.where(e < 0.0, _nudge_down(s), s)


def _add_up(a, b):
    s, e = _two_sum(a, b)
    return np.where(e > 0.0, _nudge_up(s), s)


def _prod_down(a, b):
    p, e, bad = _two_prod(a, b)
    return np.where((e < 0.0) | bad, _nudge_down(p), p)


def _prod_up(a, b):
    p, e, bad = _two_prod(a, b)
    return np.where((e > 0.0) | bad, _nudge_up(p), p)


def _iadd(alo, ahi, blo, bhi):
    # one fused pass: the upper endpoint rides along negated, since
    # rounding down -(a+b) is rounding up a+b
    a2 = np.stack([np.broadcast_arrays(alo, blo)[0],
                   -np.broadcast_arrays(ahi, bhi)[0]])
    b2 = np.stack([np.broadcast_arrays(alo, blo)[1],
                   -np.broadcast_arrays(ahi, bhi)[1]])
    s, e = _two_sum(a2, b2)
    out = np.where(e < 0.0, _nudge_down(s), s)
    return out[0], -out[1]


def _isub(alo, ahi, blo, bhi):
    return _iadd(alo, ahi, -bhi, -blo)


def _imul(alo, ahi, blo, bhi):
    alo, ahi, blo, bhi = np.broadcast_arrays(alo, ahi, blo, bhi)
    A = np.stack([alo, alo, ahi, ahi])
    B = np.stack([blo, bhi, blo, bhi])
    p, e, bad = _two_prod(A, B)
    plo = np.where((e < 0.0) | bad, _nudge_down(p), p)
    phi = np.where((e > 0.0) | bad, _nudge_up(p), p)
    return plo.min(axis=0), phi.max(axis=0)


def _idiv(alo, ahi, blo, bhi):
    if np.any((blo <= 0.0) & (bhi >= 0.0)):
        raise IntervalError("divisor straddles zero")
    c1 = alo / blo
    c2 = alo / bhi
    c3 = ahi / blo
    c4 = ahi / bhi
    lo = np.minimum(np.minimum(c1, c2), np.minimum(c3, c4))
    hi = np.maximum(np.maximum(c1, c2), np.maximum(c3, c4))
    # Division is nudged unconditionally except for exactly-zero numerators.
    zero = (alo == 0.0) & (ahi == 0.0)
    return np.where(zero, 0.0, _nudge_down(lo)), np.where(zero, 0.0, _nudge_up(hi))


def _sum_down(x, axis):
    """Rigorous lower bound of sum(x) along axis; exact when all steps are."""
    x = np.moveaxis(x, axis, 0)
    s = x[0].copy()
    c = np.zeros_like(s)
    for i in range(1, x.shape[0]):
        s, e = _two_sum(s, x[i])
        c = _add_down(c, e)
    return _add_down(s, c)


def _sum_up(x, axis):
    return -_sum_down(-np.asarray(x), axis)


def _isum(lo, hi, axis):
    """Fused directed sums of both endpoint arrays along axis."""
    lo = np.moveaxis(lo, axis, 0)
    hi = np.moveaxis(hi, axis, 0)
    x = np.concatenate([lo[:, None], -hi[:, None]], axis=1)
    out = _sum_down(x, 0)
    return out[0], -out[1]


# ---------------------------------------------------------------------------
# Scalar endpoint primitives (pure floats, much faster than numpy scalars)
# ---------------------------------------------------------------------------

def _f_add_down(a: float, b: float) -> float:
    s = a + b
    bp = s - a
    e = (a - (s - bp)) + (b - bp)
    return math.nextafter(s, -_INF) if e < 0.0 else s


def _f_add_up(a: float, b: float) -> float:
    s = a + b
    bp = s - a
    e = (a - (s - bp)) + (b - bp)
    return math.nextafter(s, _INF) if e > 0.0 else s


def _f_prod(a: float, b: float):
    p = a * b
    ah = _SPLIT * a
    ah = ah - (ah - a)
    al = a - ah
    bh = _SPLIT * b
    bh = bh - (bh - b)
    bl = b - bh
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    bad = (p != 0.0 and abs(p) < _TINY) or not math.isfinite(p) \
        or (p == 0.0 and a != 0.0 and b != 0.0)
    return p, e, bad


def _f_mul_down(a: float, b: float) -> float:
    p, e, bad = _f_prod(a, b)
    return math.nextafter(p, -_INF) if (e < 0.0 or bad) else p


def _f_mul_up(a: float, b: float) -> float:
    p, e, bad = _f_prod(a, b)
    return math.nextafter(p, _INF) if (e > 0.0 or bad) else p


def _f_imul(alo, ahi, blo, bhi):
    lo = min(_f_mul_down(alo, blo), _f_mul_down(alo, bhi),
             _f_mul_down(ahi, blo), _f_mul_down(ahi, bhi))
    hi = max(_f_mul_up(alo, blo), _f_mul_up(alo, bhi),
             _f_mul_up(ahi, blo), _f_mul_up(ahi, bhi))
    return lo, hi


# ---------------------------------------------------------------------------
# Scalar interval
# ---------------------------------------------------------------------------

class Interval:
    """A closed interval [lo, hi] of binary64 reals with outward rounding."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        if hi is None:
            hi = lo
        lo = float(lo)
        hi = float(hi)
        if not (lo <= hi):
            raise IntervalError(f"bad endpoints [{lo}, {hi}]")
        if math.isnan(lo) or math.isnan(hi):
            raise IntervalError("NaN endpoint")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, *a):
        raise AttributeError("Interval is immutable")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_fraction(fr) -> "Interval":
        """Tightest interval containing an exact rational."""
        fr = Fraction(fr)
        f = float(fr)
        if math.isinf(f):
            raise IntervalError("rational out of double range")
        ef = Fraction(f)
        lo = f if ef <= fr else math.nextafter(f, -_INF)
        hi = f if ef >= fr else math.nextafter(f, _INF)
        return Interval(lo, hi)

    @staticmethod
    def hull_of(values) -> "Interval":
        los = []
        his = []
        for v in values:
            v = v if isinstance(v, Interval) else Interval(v)
            los.append(v.lo)
            his.append(v.hi)
        return Interval(min(los), max(his))

    # -- queries -------------------------------------------------------------

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __eq__(self, other):
        return isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def width(self) -> float:
        return _f_add_up(self.hi, -self.lo)

    def mid(self) -> float:
        if self.lo == -self.hi:
            return 0.0
        return self.lo + 0.5 * (self.hi - self.lo)

    def mag(self) -> float:
        """sup |x| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    def mig(self) -> float:
        """inf |x| over the interval."""
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    def contains(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, Fraction):
            return Fraction(self.lo) <= x <= Fraction(self.hi)
        return self.lo <= x <= self.hi

    def subset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def straddles_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def intersect(self, other: "Interval") -> "Interval":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            raise IntervalError("empty intersection")
        return Interval(lo, hi)

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def inflate(self, r: float) -> "Interval":
        return Interval(_f_add_down(self.lo, -r), _f_add_up(self.hi, r))

    def abs(self) -> "Interval":
        return Interval(self.mig(), self.mag())

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(x):
        if isinstance(x, Interval):
            return x
        if isinstance(x, Fraction):
            return Interval.from_fraction(x)
        return Interval(float(x))

    def __add__(self, other):
        o = Interval._coerce(other)
        return Interval(_f_add_down(self.lo, o.lo), _f_add_up(self.hi, o.hi))

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        return self + (-Interval._coerce(other))

    def __rsub__(self, other):
        return Interval._coerce(other) + (-self)

    def __mul__(self, other):
        o = Interval._coerce(other)
        return Interval(*_f_imul(self.lo, self.hi, o.lo, o.hi))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Interval._coerce(other)
        if o.lo <= 0.0 <= o.hi:
            raise IntervalError("divisor straddles zero")
        cands = (self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi)
        if self.lo == 0.0 and self.hi == 0.0:
            return Interval(0.0, 0.0)
        return Interval(math.nextafter(min(cands), -_INF),
                        math.nextafter(max(cands), _INF))

    def __rtruediv__(self, other):
        return Interval._coerce(other) / self

    def ipow(self, n: int) -> "Interval":
        """x**n for integer n >= 0, with the even-power image tightened."""
        if n < 0:
            raise IntervalError("negative power")
        if n == 0:
            return Interval(1.0)
        if n % 2 == 0:
            a = self.abs()
            rlo, rhi = a.lo, a.hi
            for _ in range(n - 1):
                rlo, rhi = _f_imul(rlo, rhi, a.lo, a.hi)
            return Interval(max(rlo, 0.0), rhi)
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    # -- serialization -------------------------------------------------------

    def to_strings(self):
        """Decimal serialization; repr round-trips binary64 exactly, so the
        printed pair reproduces the interval without shrinking."""
        return [repr(self.lo), repr(self.hi)]

    @staticmethod
    def from_strings(pair) -> "Interval":
        return Interval(float(pair[0]), float(pair[1]))


ZERO = Interval(0.0)
ONE = Interval(1.0)


# ---------------------------------------------------------------------------
# Elementary functions
# ---------------------------------------------------------------------------

def isqrt(a: Interval) -> Interval:
    """sqrt on intervals; IEEE sqrt is correctly rounded so one nudge is safe."""
    if a.lo < 0.0:
        raise IntervalError("sqrt of interval with negative part")
    lo = math.sqrt(a.lo)
    if lo * lo != a.lo:
        lo = math.nextafter(lo, -_INF)
    hi = math.sqrt(a.hi)
    if hi * hi != a.hi:
        hi = math.nextafter(hi, _INF)
    return Interval(max(lo, 0.0), hi)


def _exp_core(x: Interval) -> Interval:
    # |x| <= 0.5 assumed; Taylor of order 13 with explicit remainder.
    n = 13
    term = ONE
    acc = ONE
    for j in range(1, n + 1):
        term = term * x / Interval(float(j))
        acc = acc + term
    # |R| <= |x|^(n+1)/(n+1)! * e^0.5 <= |x|^(n+1)/(n+1)! * 1.6488
    m = Interval(x.mag())
    rem = m.ipow(n + 1) * Interval(1.6488) / Interval(math.factorial(n + 1))
    return acc + Interval(-rem.hi, rem.hi)


def iexp(a: Interval) -> Interval:
    """Rigorous enclosure of exp on an interval via scaling and squaring."""
    def one_sided(x: float, pick_hi: bool) -> float:
        if x == 0.0:
            return 1.0
        if x > 710.0:
            raise IntervalError("exp overflow")
        if x < -746.0:
            # exp(x) is subnormal-or-below; [0, 5e-324] is a valid enclosure
            return 5e-324 if pick_hi else 0.0
        s = 0
        xi = Interval(x)
        while xi.mag() > 0.5:
            xi = xi * Interval(0.5)
            s += 1
        r = _exp_core(xi)
        for _ in range(s):
            r = r * r
        r = Interval(max(r.lo, 0.0), r.hi)
        return r.hi if pick_hi else r.lo
    return Interval(one_sided(a.lo, False), one_sided(a.hi, True))


def iexpm1_over(a: Interval) -> Interval:
    """Enclosure of (e^a - 1)/a, extended by continuity through a = 0.

    The function is monotone increasing on the reals, so endpoint evaluation
    suffices.
    """
    def val(x: float, pick_hi: bool) -> float:
        if x == 0.0:
            return 1.0
        r = (iexp(Interval(x)) - ONE) / Interval(x)
        return r.hi if pick_hi else r.lo
    return Interval(val(a.lo, False), val(a.hi, True))


# ---------------------------------------------------------------------------
# Interval vectors and matrices, numpy endpoint arrays underneath.
# ---------------------------------------------------------------------------

class IArray:
    """Dense array of intervals stored as a pair of float64 arrays."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None, copy=True):
        lo = np.array(lo, dtype=np.float64, copy=copy)
        if hi is None:
            hi = lo.copy()
        else:
            hi = np.array(hi, dtype=np.float64, copy=copy)
        if lo.shape != hi.shape:
            raise IntervalError("endpoint shape mismatch")
        if np.any(lo > hi) or np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise IntervalError("bad endpoints")
        self.lo = lo
        self.hi = hi

    # -- construction --------------------------------------------------------

    @staticmethod
    def zeros(shape) -> "IArray":
        return IArray(np.zeros(shape), np.zeros(shape), copy=False)

    @staticmethod
    def eye(n) -> "IArray":
        e = np.eye(n)
        return IArray(e, e.copy(), copy=False)

    @staticmethod
    def from_intervals(items) -> "IArray":
        items = list(items)
        return IArray(np.array([x.lo for x in items]),
                      np.array([x.hi for x in items]), copy=False)

    @property
    def shape(self):
        return self.lo.shape

    def __len__(self):
        return self.lo.shape[0]

    def copy(self) -> "IArray":
        return IArray(self.lo, self.hi)

    def at(self, *idx) -> Interval:
        return Interval(self.lo[idx].item(), self.hi[idx].item())

    def set_at(self, idx, value: Interval):
        self.lo[idx] = value.lo
        self.hi[idx] = value.hi

    def slice(self, sl) -> "IArray":
        return IArray(self.lo[sl], self.hi[sl])

    def __repr__(self):
        return f"IArray(lo={self.lo!r}, hi={self.hi!r})"

    # -- set queries ---------------------------------------------------------

    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def subset(self, other: "IArray") -> bool:
        return bool(np.all(other.lo <= self.lo) and np.all(self.hi <= other.hi))

    def subset_interior(self, other: "IArray") -> bool:
        return bool(np.all(other.lo < self.lo) and np.all(self.hi < other.hi))

    def hull(self, other: "IArray") -> "IArray":
        return IArray(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def intersect(self, other: "IArray") -> "IArray":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            raise IntervalError("empty intersection")
        return IArray(lo, hi, copy=False)

    def mid(self):
        m = self.lo + 0.5 * (self.hi - self.lo)
        return np.where(self.lo == -self.hi, 0.0, m)

    def mag(self):
        """Componentwise sup |x| (float array)."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def mig(self):
        out = np.minimum(np.abs(self.lo), np.abs(self.hi))
        return np.where((self.lo <= 0.0) & (self.hi >= 0.0), 0.0, out)

    def width(self):
        return _add_up(self.hi, -self.lo)

    def abs(self) -> "IArray":
        return IArray(self.mig(), self.mag(), copy=False)

    def inflate(self, r) -> "IArray":
        r = np.broadcast_to(np.asarray(r, dtype=np.float64), self.shape)
        return IArray(_add_down(self.lo, -r), _add_up(self.hi, r), copy=False)

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(x):
        if isinstance(x, IArray):
            return x.lo, x.hi
        if isinstance(x, Interval):
            return np.float64(x.lo), np.float64(x.hi)
        x = np.asarray(x, dtype=np.float64)
        return x, x

    def __add__(self, other):
        blo, bhi = IArray._coerce(other)
        return _mk(*_iadd(self.lo, self.hi, blo, bhi))

    __radd__ = __add__

    def __neg__(self):
        return _mk((-self.hi).copy(), (-self.lo).copy())

    def __sub__(self, other):
        blo, bhi = IArray._coerce(other)
        return _mk(*_isub(self.lo, self.hi, blo, bhi))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        blo, bhi = IArray._coerce(other)
        return _mk(*_imul(self.lo, self.hi, blo, bhi))

    __rmul__ = __mul__

    def __truediv__(self, other):
        blo, bhi = IArray._coerce(other)
        blo = np.broadcast_to(blo, self.shape)
        bhi = np.broadcast_to(bhi, self.shape)
        return _mk(*_idiv(self.lo, self.hi, blo, bhi))

    def sum(self, axis=0) -> "IArray":
        return _mk(*_isum(self.lo, self.hi, axis))

    def dot(self, other) -> "IArray":
        """Rigorous A @ B for interval matrices/vectors."""
        blo, bhi = IArray._coerce(other)
        a_nd = self.lo.ndim
        b_nd = blo.ndim
        if a_nd == 2 and b_nd == 2:
            plo, phi = _imul(self.lo[:, :, None], self.hi[:, :, None],
                             blo[None, :, :], bhi[None, :, :])
            return _mk(*_isum(plo, phi, 1))
        if a_nd == 2 and b_nd == 1:
            plo, phi = _imul(self.lo, self.hi, blo[None, :], bhi[None, :])
            return _mk(*_isum(plo, phi, 1))
        if a_nd == 1 and b_nd == 1:
            plo, phi = _imul(self.lo, self.hi, blo, bhi)
            return _mk(*_isum(plo, phi, 0))
        raise IntervalError("unsupported dot shapes")

    def __matmul__(self, other):
        return self.dot(other)

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=np.float64)
        return IArray(other, other, copy=False).dot(self)

    @property
    def T(self) -> "IArray":
        return IArray(self.lo.T, self.hi.T)

    # -- norms ---------------------------------------------------------------

    def norm1(self) -> Interval:
        """Max column sum of |.| (operator 1-norm) as an interval."""
        a = self.abs()
        s = a.sum(axis=0)
        return Interval(float(np.max(s.lo)), float(np.max(s.hi)))

    def norminf(self) -> Interval:
        if self.lo.ndim == 1:
            a = self.abs()
            return Interval(float(np.max(a.lo)), float(np.max(a.hi)))
        a = self.abs()
        s = a.sum(axis=1)
        return Interval(float(np.max(s.lo)), float(np.max(s.hi)))

    def norm2_upper(self) -> float:
        """Rigorous upper bound of the operator 2-norm via sqrt(n1 * ninf)."""
        p = Interval(self.norm1().hi) * Interval(self.norminf().hi)
        return isqrt(Interval(max(p.hi, 0.0))).hi

    def norm2_vec(self) -> Interval:
        """Euclidean norm of an interval vector."""
        a = self.abs()
        sq = a * a
        s = sq.sum(axis=0)
        return isqrt(Interval(max(s.lo, 0.0), s.hi))

    # -- serialization -------------------------------------------------------

    def to_lists(self):
        return [np.vectorize(repr)(self.lo).tolist(),
                np.vectorize(repr)(self.hi).tolist()]

    @staticmethod
    def from_lists(pair) -> "IArray":
        conv = np.vectorize(float)
        return IArray(conv(np.array(pair[0], dtype=object)),
                      conv(np.array(pair[1], dtype=object)), copy=False)


def _mk(lo, hi) -> "IArray":
    """Trusted fast constructor: endpoints are valid by construction."""
    obj = IArray.__new__(IArray)
    obj.lo = lo
    obj.hi = hi
    return obj


def ivector(values) -> IArray:
    """Interval vector from floats, Intervals or (lo, hi) pairs."""
    items = []
    for v in values:
        if isinstance(v, Interval):
            items.append(v)
        elif isinstance(v, (tuple, list)):
            items.append(Interval(*v))
        else:
            items.append(Interval(float(v)))
    return IArray.from_intervals(items)


def imatrix(rows) -> IArray:
    lo = []
    hi = []
    for row in rows:
        v = ivector(row)
        lo.append(v.lo)
        hi.append(v.hi)
    return IArray(np.array(lo), np.array(hi), copy=False)


def interval_inverse(a: IArray) -> IArray:
    """Enclosure of the inverse of a point (thin) matrix.

    Uses the residual form inv(A) in Y + Y (I - A Y) inv(A) with the numeric
    inverse Y, certified through a contraction bound on the residual.
    """
    mid = a.mid()
    n = mid.shape[0]
    try:
        y = np.linalg.inv(mid)
    except np.linalg.LinAlgError as e:
        raise IntervalError("singular matrix") from e
    ia = IArray(a.lo, a.hi)
    ym = IArray(y, y.copy(), copy=False)
    resid = IArray.eye(n) - ia.dot(ym)          # I - A Y
    beta = resid.norminf().hi                   # ||I - A Y||_inf
    if beta >= 1.0:
        raise IntervalError("matrix too ill-conditioned for inversion")
    # inv(A) = Y (I - R)^{-1} = Y + Y R (I-R)^{-1}, and every entry of
    # R (I-R)^{-1} is bounded by beta / (1 - beta) in absolute value.
    corr = (Interval(beta) / (ONE - Interval(beta))).hi
    rowsum = _sum_up(np.abs(y), 1)
    slack = _prod_up(np.repeat(rowsum[:, None], n, axis=1), np.float64(corr))
    return ym + IArray(-slack, slack, copy=False)


def frac_pow_interval(base: Fraction, k: int) -> Interval:
    """Tight interval for base**k with exact rational base (k may be negative)."""
    return Interval.from_fraction(Fraction(base) ** k)


# ---------------------------------------------------------------------------
# Midpoint-radius fast path for dense matrix products.
#
# For the wide, heavily-multiplied objects (variational jets, e^{Jt} series)
# endpointwise products are overhead-bound; a (mid, rad) representation costs
# a few BLAS calls instead.  Rigor: float matmul errors are covered by the
# classical gamma_n bound, and every radius computation is inflated by
# (1 + _MR_SLACK) plus one subnormal quantum, which strictly dominates the
# rounding of the radius arithmetic itself.
# ---------------------------------------------------------------------------

_EPS = 2.0 ** -53
_MR_SLACK = 1e-10


def _mr_gamma(n: int) -> float:
    g = n * _EPS / (1.0 - n * _EPS)
    return g * (1.0 + 1e-6)


def _up(a):
    """Componentwise strict upper inflation of a nonnegative float array."""
    return np.nextafter(a * (1.0 + _MR_SLACK) + 5e-324, _INF)


def _upz(a):
    """Like _up but exact zeros stay zero.  Sound only when a float zero
    implies the exact result is zero, i.e. when factors cannot underflow;
    use together with _pos_floor on the inputs."""
    a = np.asarray(a, dtype=np.float64)
    return np.where(a == 0.0, 0.0, np.nextafter(a * (1.0 + _MR_SLACK) + 5e-324, _INF))


def _pos_floor(a, floor: float = 1e-130):
    """Raise tiny positive entries to `floor` so that products of floored
    values cannot underflow to zero (keeping float zero == exact zero)."""
    a = np.asarray(a, dtype=np.float64)
    return np.where((a > 0.0) & (a < floor), floor, a)


def mr_from_iarray(x: IArray):
    m = x.lo + 0.5 * (x.hi - x.lo)
    m = np.where(x.lo == -x.hi, 0.0, m)
    r = np.maximum(_add_up(x.hi, -m), _add_up(m, -x.lo))
    return m, np.maximum(r, 0.0)


def mr_to_iarray(m, r):
    return _mk(_add_down(m, -r), _add_up(m, r))


def mr_matmul(am, ar, bm, br):
    """(mid, rad) of the product of two mid-rad interval matrices."""
    n = am.shape[-1]
    g = _mr_gamma(n + 2)
    cm = am @ bm
    aa = np.abs(am)
    bb = np.abs(bm)
    cr = aa @ br + ar @ (bb + br) + g * (aa @ bb)
    return cm, _up(cr)


def mr_add(am, ar, bm, br):
    cm = am + bm
    cr = ar + br + np.abs(cm) * (4.0 * _EPS)
    return cm, _up(cr)


def mr_scale(am, ar, s: Interval):
    """Multiply a mid-rad array by an interval scalar."""
    sm = s.mid()
    sr = max(s.hi - sm, sm - s.lo)
    sr = math.nextafter(sr * (1.0 + _MR_SLACK) + 5e-324, _INF)
    cm = am * sm
    cr = np.abs(am) * sr + ar * (abs(sm) + sr) + np.abs(cm) * (4.0 * _EPS)
    return cm, _up(cr)

def iexp_array(x: IArray) -> IArray:
    """Rigorous elementwise exp of an interval array (scaling and squaring)."""
    if x.lo.size and float(np.max(x.hi)) > 700.0:
        raise IntervalError("exp overflow in array")
    top = float(np.max(np.abs(np.concatenate([x.lo.ravel(), x.hi.ravel()])))) \
        if x.lo.size else 0.0
    s = 0
    while top > 0.5:
        top *= 0.5
        s += 1
    scale = 2.0 ** (-s)
    xs = IArray(x.lo * scale, x.hi * scale, copy=False)  # power of two: exact
    n = 13
    acc = IArray(np.ones_like(x.lo), np.ones_like(x.hi), copy=False)
    term = acc
    for j in range(1, n + 1):
        term = (term * xs) / float(j)
        acc = acc + term
    mag = np.maximum(np.abs(xs.lo), np.abs(xs.hi))
    rem_lead = IArray(mag, mag.copy(), copy=False)
    r = rem_lead
    for _ in range(n):
        r = r * rem_lead
    rem = (r * Interval(1.6488 / math.factorial(n + 1))).hi
    out = acc + IArray(-rem, rem, copy=False)
    out = IArray(np.maximum(out.lo, 0.0), out.hi, copy=False)
    for _ in range(s):
        out = out * out
        out = IArray(np.maximum(out.lo, 0.0), out.hi, copy=False)
    return out


def iexpm1_over_array(x: IArray) -> IArray:
    """Elementwise enclosure of (e^x - 1)/x, continued by 1 through x = 0.

    Monotone increasing in x, so endpoint evaluation is exact up to rounding.
    """
    def one_side(v: np.ndarray, pick_hi: bool) -> np.ndarray:
        vi = IArray(v, v.copy(), copy=False)
        e = iexp_array(vi)
        num = e + (-1.0)
        safe = np.where(v == 0.0, 1.0, v)
        quot = num / IArray(safe, safe.copy(), copy=False)
        vals = quot.hi if pick_hi else quot.lo
        return np.where(v == 0.0, 1.0, vals)

    return IArray(one_side(x.lo, False), one_side(x.hi, True), copy=False)
