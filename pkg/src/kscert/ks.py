"""The Kuramoto-Sivashinsky ladder in Fourier space and its derivative bounds.

Modes solve

    a_k' = F_k(a) = k^2 (1 - nu k^2) a_k - k sum_{n<k} a_n a_{k-n}
                    + 2 k sum_{n>=1} a_n a_{n+k}.

Everything here is a pure function of a ``GeometricBound`` argument; infinite
sums are split into an explicit part read from the head and a closed-form
geometric remainder, never dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .intervals import IArray, Interval, ZERO, ONE, _imul, _isum
from .tails import (GeometricBound, PolyGeometricBound, TailError,
                    geom_sum_from, qpow)


class IsolationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlockNorms:
    """Bounds for the blocks of DF(z) over a set, in the (m, tail) splitting.

    rows_y[i-1] >= sum_{j>m} |dF_i/dz_j|   (operator norm of row i over Y)
    cols_y[k-1] >= sup_{j>m} |dF_j/dz_k|
    mu_yy       >= logarithmic norm (sup norm) of the tail-tail block
    axx         -- interval enclosure of the finite block, m x m
    """
    rows_y: np.ndarray
    cols_y: np.ndarray
    mu_yy: float
    axx: IArray


def _first_all_negative(f, k1: int, hard_cap: int) -> int:
    """Smallest K with f(k) < 0 (certified upper endpoint) for all k >= K,
    where f is known to be decreasing past k1."""
    if k1 > hard_cap:
        raise IsolationError("isolation not certifiable")
    last_bad = 0
    for k in range(1, k1 + 1):
        if f(k).hi >= 0.0:
            last_bad = k
    k = k1 + 1
    while f(k).hi >= 0.0:
        last_bad = k
        k += 1
        if k > hard_cap:
            raise IsolationError("isolation not certifiable")
    return last_bad + 1


def _sup_decreasing_quartic(nu: Interval, c2: Interval, c1: Interval, c0: Interval,
                            k0: int, explicit=None):
    """Certified sup over k >= k0 of f(k) = -nu k^4 + c2 k^2 + c1 k + c0.

    All of c2, c1, c0 have nonnegative upper bounds.  f is decreasing for
    k >= k1 once 2 nu k^3 >= 2 c2 k and 2 nu k^3 >= c1, so the sup is a
    finite max.  ``explicit`` may supply a tighter per-index evaluator used
    on the scanned range; f still dominates it beyond.
    """
    nu_lo = max(nu.lo, 1e-300)
    k1 = max(1.0, math.sqrt(max(c2.hi, 0.0) / nu_lo),
             (max(c1.hi, 0.0) / (2.0 * nu_lo)) ** (1.0 / 3.0))
    k1 = int(math.ceil(k1)) + 1
    kend = max(k0, k1)

    def f(k: int) -> Interval:
        ki = Interval(float(k))
        return -nu * ki.ipow(4) + c2 * ki.ipow(2) + c1 * ki + c0

    vals = []
    for k in range(k0, kend + 1):
        vals.append(explicit(k) if explicit is not None else f(k))
    vals.append(f(kend + 1))  # dominates every k > kend
    lo = max(v.lo for v in vals)
    hi = max(v.hi for v in vals)
    return Interval(lo, hi), kend


class KSField:
    """KS vector field at viscosity nu with m leading modes and tail ratio q."""

    def __init__(self, nu, m: int, q, delta_grid=None):
        self.nu = Fraction(nu)
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        self.m = int(m)
        if self.m < 1:
            raise ValueError("m must be at least 1")
        self.q = Fraction(q)
        if self.q <= 1:
            raise ValueError("q must exceed 1")
        self.delta_grid = list(delta_grid) if delta_grid else None
        self._nu_i = Interval.from_fraction(self.nu)
        self._lam_cache: dict[int, Interval] = {}

    # -- linear part ----------------------------------------------------------

    def lam(self, k: int) -> Interval:
        got = self._lam_cache.get(k)
        if got is None:
            ki = Interval(float(k))
            k2 = ki.ipow(2)
            got = k2 * (ONE - self._nu_i * k2)
            self._lam_cache[k] = got
        return got

    def lam_vec(self, upto: int) -> IArray:
        return IArray.from_intervals([self.lam(k) for k in range(1, upto + 1)])

    # -- convolution core ------------------------------------------------------

    def _ext_entries(self, u: GeometricBound, upto: int) -> IArray:
        return u.extend_head(upto).head

    def _conv_parts(self, u: GeometricBound, out_to: int, n_start=None):
        """(S1, S2) with S1_k = sum_{n<k} a_n a_{k-n} and
        S2_k = sum_{n >= max(1, n_start(k))} a_n a_{n+k}, both enclosures.

        The second sum is explicit for n <= mh and closed by the geometric
        tail beyond.
        """
        mh = u.mh
        e = self._ext_entries(u, mh + out_to)
        K = np.arange(1, out_to + 1)[:, None]          # out_to x 1
        N = np.arange(1, mh + 1)[None, :]              # 1 x mh

        # S1: pairs (n, k-n), valid for n <= k-1; also n <= mh and k-n <= mh+out_to
        n1 = np.arange(1, out_to)[None, :] if out_to > 1 else np.zeros((1, 0), int)
        if out_to > 1:
            valid1 = n1 < K
            i_a = np.clip(n1 - 1, 0, len(e) - 1)
            i_b = np.clip(K - n1 - 1, 0, len(e) - 1)
            alo, ahi = e.lo[i_a], e.hi[i_a]
            blo, bhi = e.lo[i_b], e.hi[i_b]
            plo, phi = _imul(alo, ahi, blo, bhi)
            plo = np.where(valid1, plo, 0.0)
            phi = np.where(valid1, phi, 0.0)
            s1lo, s1hi = _isum(plo, phi, 1)
            s1 = IArray(s1lo, s1hi, copy=False)
        else:
            s1 = IArray.zeros((out_to,))

        # S2 explicit part: n = 1..mh (optionally from n_start(k))
        i_a = np.broadcast_to(N - 1, (out_to, mh))
        i_b = N + K - 1                                 # 0-based index of a_{n+k}
        alo, ahi = e.lo[i_a], e.hi[i_a]
        blo, bhi = e.lo[i_b], e.hi[i_b]
        plo, phi = _imul(alo, ahi, blo, bhi)
        if n_start is not None:
            starts = np.array([n_start(int(k)) for k in range(1, out_to + 1)])
            mask = N >= starts[:, None]
            plo = np.where(mask, plo, 0.0)
            phi = np.where(mask, phi, 0.0)
        s2lo, s2hi = _isum(plo, phi, 1)
        s2 = IArray(s2lo, s2hi, copy=False)

        # geometric remainder over n > mh: |sum| <= C^2 q^{-k} q^{-2(mh+1)}/(1-q^{-2})
        if u.C.hi > 0.0:
            g = geom_sum_from(self.q * self.q, mh + 1)
            c2 = (u.C * u.C) * Interval.from_fraction(g)
            rem = np.array([(c2 * qpow(self.q, -k)).hi for k in range(1, out_to + 1)])
            s2 = s2 + IArray(-rem, rem, copy=False)
        return s1, s2

    # -- field evaluation ------------------------------------------------------

    def eval_head(self, u: GeometricBound, out_to: int) -> IArray:
        """Enclosures of F_k(u) for k = 1..out_to."""
        s1, s2 = self._conv_parts(u, out_to)
        k = np.arange(1, out_to + 1, dtype=np.float64)
        ki = IArray(k, k.copy(), copy=False)
        lam = self.lam_vec(out_to)
        uh = self._ext_entries(u, out_to).slice(slice(0, out_to))
        return lam * uh - ki * s1 + (2.0 * ki) * s2

    def nonlinear_head(self, u: GeometricBound, out_to: int) -> IArray:
        """Enclosures of N_k(u) = F_k - lambda_k a_k for k = 1..out_to."""
        s1, s2 = self._conv_parts(u, out_to)
        k = np.arange(1, out_to + 1, dtype=np.float64)
        ki = IArray(k, k.copy(), copy=False)
        return (2.0 * ki) * s2 - ki * s1

    def head_pair(self, u: GeometricBound, out_to: int):
        """(F, N) over modes 1..out_to sharing one convolution pass."""
        s1, s2 = self._conv_parts(u, out_to)
        k = np.arange(1, out_to + 1, dtype=np.float64)
        ki = IArray(k, k.copy(), copy=False)
        nl = (2.0 * ki) * s2 - ki * s1
        lam = self.lam_vec(out_to)
        uh = self._ext_entries(u, out_to).slice(slice(0, out_to))
        return lam * uh + nl, nl

    def glue_head(self, u: GeometricBound, m_gal: int, out_to: int) -> IArray:
        """Part of F_k (k <= out_to <= m_gal) that reads modes beyond m_gal."""
        if out_to > m_gal:
            raise ValueError("glue is defined for output modes inside the projection")
        s1, s2 = self._conv_parts(u, out_to, n_start=lambda k: m_gal - k + 1)
        k = np.arange(1, out_to + 1, dtype=np.float64)
        ki = IArray(k, k.copy(), copy=False)
        return (2.0 * ki) * s2

    def tail_poly(self, u: GeometricBound) -> PolyGeometricBound:
        """|F_k(u)| <= P(k) q^{-k} for all k, P with nonnegative coefficients."""
        S = Interval(0.0, u.global_S())
        q2m1 = Interval.from_fraction(self.q * self.q - 1)
        c4 = self._nu_i * S
        c2 = S + S * S
        c1 = (2.0 * (S * S)) / q2m1
        return PolyGeometricBound([ZERO, Interval(0.0, c1.hi),
                                   Interval(0.0, c2.hi), ZERO,
                                   Interval(0.0, c4.hi)], self.q)

    def nonlinear_tail_poly(self, u: GeometricBound) -> PolyGeometricBound:
        """|N_k(u)| <= P(k) q^{-k}: the convolution part alone."""
        S = Interval(0.0, u.global_S())
        q2m1 = Interval.from_fraction(self.q * self.q - 1)
        c2 = S * S
        c1 = (2.0 * (S * S)) / q2m1
        return PolyGeometricBound([ZERO, Interval(0.0, c1.hi),
                                   Interval(0.0, c2.hi)], self.q)

    def eval_field(self, u: GeometricBound, out_to=None):
        """(head, tail) image of the field: explicit modes plus envelope."""
        out_to = out_to or u.mh
        return self.eval_head(u, out_to), self.tail_poly(u)

    def tail_drive_bounds(self, E: GeometricBound, m2: int, kex=None):
        """Per-mode bounds for the nonlinearity driving the far tail.

        Returns (kex, mags, PC): |N_k(E)| <= mags[k - m2 - 1] for
        m2 < k <= kex, and |N_k(E)| <= PC(k) q^{-k} for k > kex.  The
        polynomial envelope only carries C-scaled coefficients because past
        2 m2 + 1 every convolution term reads the geometric tail at least
        once.
        """
        kex = kex or (2 * m2 + 1)
        if kex < 2 * m2 + 1:
            raise ValueError("explicit range must reach 2*m2+1")
        ne = self.nonlinear_head(E, kex)
        mags = ne.mag()[m2:]
        s = E.sup_vector(min(m2, E.mh))
        G = ZERO
        for n in range(1, len(s) + 1):
            G = G + Interval(0.0, s[n - 1]) * qpow(self.q, n)
        C = Interval(0.0, E.C.hi)
        if E.mh > m2:
            # extra explicit head entries also enter with s_n q^n <= their sup
            for n in range(m2 + 1, E.mh + 1):
                G = G + Interval(0.0, E.sup(n)) * qpow(self.q, n)
        S1 = E.sup_tail_sum_from(1)
        c1 = 2.0 * C * G + 2.0 * C * S1 + 2.0 * (C * C)
        pc = PolyGeometricBound([ZERO, Interval(0.0, c1.hi),
                                 Interval(0.0, (C * C).hi)], self.q)
        return kex, mags, pc

    def dn_apply_columns(self, u: GeometricBound, vhead: IArray,
                         vtail: np.ndarray, out_to: int) -> IArray:
        """Enclosures of (DN(u) v_j)_k for k = 1..out_to and every column j.

        vhead holds rows 1..mw of the columns as intervals; beyond that the
        columns obey |v_ij| <= vtail[j] q^{-i}.  Returns an IArray of shape
        (out_to, ncols).
        """
        mw = vhead.shape[0]
        nc = vhead.shape[1]
        reach = max(mw, u.mh) + out_to
        ue = self._ext_entries(u, reach)
        # extended signed column entries: rows beyond mw become symmetric
        # geometric reads
        rows = []
        for i in range(mw + 1, reach + 1):
            b = qpow(self.q, -i).hi
            rows.append(vtail * b)
        vext_hi = np.vstack([vhead.hi] + ([np.vstack(rows)] if rows else []))
        vext_lo = np.vstack([vhead.lo] + ([-np.vstack(rows)] if rows else []))
        ve = IArray(vext_lo, vext_hi, copy=False)

        K = np.arange(1, out_to + 1)[:, None]
        # c1[k, j] = sum_{n<k} u_n v_{k-n, j}
        if out_to > 1:
            n1 = np.arange(1, out_to)
            valid = (n1[None, :] < K)
            ia = np.clip(n1 - 1, 0, len(ue) - 1)[None, :]
            ib = np.clip(K - n1[None, :] - 1, 0, ve.lo.shape[0] - 1)
            ulo = ue.lo[ia][:, :, None]
            uhi = ue.hi[ia][:, :, None]
            vlo = ve.lo[ib]
            vhi = ve.hi[ib]
            plo, phi = _imul(ulo, uhi, vlo, vhi)
            mask = valid[:, :, None]
            plo = np.where(mask, plo, 0.0)
            phi = np.where(mask, phi, 0.0)
            c1 = IArray(*_isum(plo, phi, 1), copy=False)
        else:
            c1 = IArray.zeros((out_to, nc))

        # c2a[k, j] = sum_n v_{n, j} u_{n+k};  c2b = sum_n u_n v_{n+k, j}
        ncut = max(mw, u.mh)
        n = np.arange(1, ncut + 1)
        ia = (n[None, :] + K - 1)
        ulo2 = ue.lo[ia][:, :, None]
        uhi2 = ue.hi[ia][:, :, None]
        vlo2 = ve.lo[np.clip(n - 1, 0, ve.lo.shape[0] - 1)][None, :, :]
        vhi2 = ve.hi[np.clip(n - 1, 0, ve.lo.shape[0] - 1)][None, :, :]
        plo, phi = _imul(ulo2, uhi2, vlo2, vhi2)
        c2a = IArray(*_isum(plo, phi, 1), copy=False)

        ib = np.clip(n[None, :] + K - 1, 0, ve.lo.shape[0] - 1)
        vlo3 = ve.lo[ib]
        vhi3 = ve.hi[ib]
        un_lo = ue.lo[np.clip(n - 1, 0, len(ue) - 1)][None, :, None]
        un_hi = ue.hi[np.clip(n - 1, 0, len(ue) - 1)][None, :, None]
        plo, phi = _imul(un_lo, un_hi, vlo3, vhi3)
        c2b = IArray(*_isum(plo, phi, 1), copy=False)

        # remainder over n > ncut: u geometric, v geometric
        g = geom_sum_from(self.q * self.q, ncut + 1)
        cc = Interval(0.0, u.C.hi) * Interval.from_fraction(g)
        rem = np.empty((out_to, nc))
        for k in range(1, out_to + 1):
            base = (cc * qpow(self.q, -k)).hi
            rem[k - 1] = base * vtail
        pad = IArray(-2.0 * rem, 2.0 * rem, copy=False)

        k = np.arange(1, out_to + 1, dtype=np.float64)[:, None]
        ki = IArray(np.broadcast_to(k, (out_to, nc)).copy(),
                    np.broadcast_to(k, (out_to, nc)).copy(), copy=False)
        return (2.0 * ki) * (c2a + c2b + pad) - (2.0 * ki) * c1

    def dn_apply_head(self, u: GeometricBound, v: GeometricBound,
                      out_to: int) -> IArray:
        """Enclosures of (DN(u) v)_k for k = 1..out_to:
        -2k sum_{n<k} u_n v_{k-n} + 2k sum_n (v_n u_{n+k} + u_n v_{n+k})."""
        mh = max(u.mh, v.mh)
        ue = self._ext_entries(u, mh + out_to)
        ve = self._ext_entries(v, mh + out_to)
        K = np.arange(1, out_to + 1)[:, None]
        N = np.arange(1, mh + 1)[None, :]

        if out_to > 1:
            n1 = np.arange(1, out_to)[None, :]
            valid1 = n1 < K
            i_a = np.clip(n1 - 1, 0, len(ue) - 1)
            i_b = np.clip(K - n1 - 1, 0, len(ve) - 1)
            plo, phi = _imul(ue.lo[i_a], ue.hi[i_a], ve.lo[i_b], ve.hi[i_b])
            plo = np.where(valid1, plo, 0.0)
            phi = np.where(valid1, phi, 0.0)
            c1 = IArray(*_isum(plo, phi, 1), copy=False)
        else:
            c1 = IArray.zeros((out_to,))

        i_a = np.broadcast_to(N - 1, (out_to, mh))
        i_b = N + K - 1
        alo, ahi = _imul(ve.lo[i_a], ve.hi[i_a], ue.lo[i_b], ue.hi[i_b])
        c2a = IArray(*_isum(alo, ahi, 1), copy=False)
        blo, bhi = _imul(ue.lo[i_a], ue.hi[i_a], ve.lo[i_b], ve.hi[i_b])
        c2b = IArray(*_isum(blo, bhi, 1), copy=False)

        # remainder over n > mh: both factors read the geometric tails
        if u.C.hi > 0.0 and v.C.hi > 0.0:
            g = geom_sum_from(self.q * self.q, mh + 1)
            cc = (u.C * v.C) * Interval.from_fraction(g)
            rem = np.array([(cc * qpow(self.q, -k)).hi
                            for k in range(1, out_to + 1)])
            pad = IArray(-2.0 * rem, 2.0 * rem, copy=False)
        else:
            pad = IArray.zeros((out_to,))
        k = np.arange(1, out_to + 1, dtype=np.float64)
        ki = IArray(k, k.copy(), copy=False)
        return (2.0 * ki) * (c2a + c2b + pad) - (2.0 * ki) * c1

    # -- derivatives ------------------------------------------------------------

    def partial_derivative(self, i: int, k: int, z: GeometricBound) -> Interval:
        """Enclosure of dF_i/dz_k over z."""
        if i < 1 or k < 1:
            raise ValueError("indices are 1-based")
        two_i = Interval(2.0 * i)
        if i == k:
            return self.lam(i) + two_i * z.entry(2 * i)
        omega = -1.0 if i > k else 1.0
        return two_i * (Interval(omega) * z.entry(abs(i - k)) + z.entry(i + k))

    def partial_derivative_uniform(self, i: int, k: int, S: float) -> float:
        """The closed-form dominating bound for z in W_{q,S}."""
        if i == k:
            v = self.lam(i).abs() + Interval(2.0 * i) * Interval(S) * qpow(self.q, -2 * i)
            return v.hi
        v = Interval(4.0 * i) * Interval(S) * qpow(self.q, -abs(i - k))
        return v.hi

    def axx_block(self, E: GeometricBound, m_eff: int) -> IArray:
        """Interval matrix of dF_i/dz_k over E for i, k <= m_eff."""
        rows = []
        for i in range(1, m_eff + 1):
            rows.append(IArray.from_intervals(
                [self.partial_derivative(i, k, E) for k in range(1, m_eff + 1)]))
        lo = np.stack([r.lo for r in rows])
        hi = np.stack([r.hi for r in rows])
        return IArray(lo, hi, copy=False)

    def _sup_suffix(self, E: GeometricBound, k0: int) -> Interval:
        return E.sup_tail_sum_from(k0)

    def derivative_block_norms(self, E: GeometricBound, m_eff=None) -> BlockNorms:
        m_eff = m_eff or self.m
        rows = np.empty(m_eff)
        for i in range(1, m_eff + 1):
            # sum_{j>m} 2i (s_{j-i} + s_{i+j})
            t = self._sup_suffix(E, m_eff - i + 1) + self._sup_suffix(E, m_eff + i + 1)
            rows[i - 1] = (Interval(2.0 * i) * Interval(0.0, t.hi)).hi

        cols = np.empty(m_eff)
        qm1 = self.q - 1
        j_geom = int(math.ceil(1.0 / float(qm1))) + 1
        for k in range(1, m_eff + 1):
            j_end = max(E.mh + k, j_geom, m_eff + 1)
            best = 0.0
            for j in range(m_eff + 1, j_end + 1):
                v = Interval(2.0 * j) * (Interval(E.sup(j - k)) + Interval(E.sup(j + k)))
                best = max(best, v.hi)
            # for j > j_end every read is geometric and 2 j C q^{k-j}(1+q^{-2k})
            # decreases with j
            j = j_end + 1
            v = (Interval(2.0 * j) * E.C *
                 (qpow(self.q, -(j - k)) + qpow(self.q, -(j + k))))
            cols[k - 1] = max(best, v.hi)

        # mu(A_yy): row sums over the tail block
        s_tot = self._sup_suffix(E, 1)
        S_glob = Interval(0.0, E.global_S())

        def sup_prefix(n: int) -> Interval:
            # upper bound of sum_{l=1}^{n} s_l
            if n <= 0:
                return ZERO
            nh = min(n, E.mh)
            s = E.sup_vector(nh)
            acc = IArray(s, s.copy(), copy=False).sum(axis=0)
            out = Interval(0.0, acc.hi)
            if n > E.mh:
                out = out + Interval(0.0, E.C.hi) * Interval.from_fraction(
                    geom_sum_from(self.q, E.mh + 1))
            return Interval(0.0, out.hi)

        def mu_row(j: int) -> Interval:
            row = self.lam(j) + Interval(2.0 * j) * Interval(0.0, E.sup(2 * j))
            off = (sup_prefix(j - m_eff - 1) + s_tot
                   + self._sup_suffix(E, j + m_eff + 1))
            return row + Interval(2.0 * j) * Interval(0.0, off.hi)

        b = 4.0 * s_tot + 2.0 * S_glob * qpow(self.q, -2 * (m_eff + 1))
        mu, _ = _sup_decreasing_quartic(self._nu_i, ONE,
                                        Interval(0.0, max(b.hi, 0.0)), ZERO,
                                        m_eff + 1, explicit=mu_row)
        return BlockNorms(rows_y=rows, cols_y=cols, mu_yy=mu.hi,
                          axx=self.axx_block(E, m_eff))

    def head_comparison(self, E: GeometricBound, m_eff: int) -> np.ndarray:
        """m x m Metzler matrix dominating the leading block of DF over E
        and of every Galerkin truncation of it: off-diagonals bound the
        absolute entries term by term, the diagonal bounds the true value
        with and without the 2i z_{2i} term."""
        s = E.sup_vector(2 * m_eff)
        J = np.empty((m_eff, m_eff))
        for i in range(1, m_eff + 1):
            for k in range(1, m_eff + 1):
                if i == k:
                    d = self.lam(i) + Interval(2.0 * i) * E.entry(2 * i)
                    J[i - 1, i - 1] = max(self.lam(i).hi, d.hi)
                else:
                    v = Interval(2.0 * i) * (Interval(s[abs(i - k) - 1])
                                             + Interval(s[i + k - 1]))
                    J[i - 1, k - 1] = v.hi
        return J

    def build_J(self, E: GeometricBound, m_eff=None) -> np.ndarray:
        """(m+1)x(m+1) Metzler comparison matrix dominating DF on E and all
        of its Galerkin truncations."""
        m_eff = m_eff or self.m
        bn = self.derivative_block_norms(E, m_eff)
        J = np.empty((m_eff + 1, m_eff + 1))
        J[:m_eff, :m_eff] = self.head_comparison(E, m_eff)
        J[:m_eff, m_eff] = bn.rows_y
        J[m_eff, :m_eff] = bn.cols_y
        J[m_eff, m_eff] = bn.mu_yy
        return J

    # -- isolation and uniform log-norm constants --------------------------------

    def isolation_index(self, S: float, hard_cap: int = 100000) -> int:
        """Smallest K with a_k F_k(a) < 0 on |a_k| = S q^{-k} for all k >= K."""
        Si = Interval(0.0, S)
        q2m1 = Interval.from_fraction(self.q * self.q - 1)
        c2 = ONE + Si
        c1 = (2.0 * Si) / q2m1

        def f(k: int) -> Interval:
            ki = Interval(float(k))
            return -self._nu_i * ki.ipow(4) + c2 * ki.ipow(2) + c1 * ki

        nu_lo = max(self._nu_i.lo, 1e-300)
        k1 = int(math.ceil(max(1.0, math.sqrt(c2.hi / nu_lo),
                               (c1.hi / (2 * nu_lo)) ** (1 / 3)))) + 1
        return _first_all_negative(f, k1, hard_cap)

    def isolation_index_variational(self, S: float, hard_cap: int = 100000) -> int:
        """Smallest K past which the variational tail field points inwards
        on |C_k| = S_V q^{-k}, for any S_V (the condition is S_V-free)."""
        Si = Interval(0.0, S)
        qm1 = Interval.from_fraction(self.q - 1)

        def f(k: int) -> Interval:
            ki = Interval(float(k))
            return (-self._nu_i * ki.ipow(4) + ki.ipow(2)
                    + (2.0 * Si) * ki * qpow(self.q, -2 * k)
                    + (8.0 * Si) * ki / qm1)

        nu_lo = max(self._nu_i.lo, 1e-300)
        b = ((2.0 * Si) * qpow(self.q, -2) + (8.0 * Si) / qm1).hi
        k1 = int(math.ceil(max(1.0, math.sqrt(1.0 / nu_lo),
                               (max(b, 0.0) / (2 * nu_lo)) ** (1 / 3)))) + 1
        return _first_all_negative(f, k1, hard_cap)

    def uniform_lognorm(self, S: float) -> Interval:
        """l = sup_i R_i with R_i = lambda_i + 8 i S (1/(q-1) + q^{-2i})."""
        Si = Interval(0.0, S)
        qm1 = Interval.from_fraction(self.q - 1)

        def r(i: int) -> Interval:
            return self.lam(i) + (8.0 * i) * Si * (ONE / qm1 + qpow(self.q, -2 * i))

        b = (8.0 * Si) * (ONE / qm1 + qpow(self.q, -2))
        sup, _ = _sup_decreasing_quartic(self._nu_i, ONE,
                                         Interval(0.0, max(b.hi, 0.0)), ZERO,
                                         1, explicit=r)
        return sup

    def uniform_lognorm_variational(self, S: float, S_c: float) -> Interval:
        """A = sup_i [6 i S_c/(q-1) + R_i] for the joint variational system."""
        Si = Interval(0.0, S)
        Sc = Interval(0.0, S_c)
        qm1 = Interval.from_fraction(self.q - 1)

        def r(i: int) -> Interval:
            return ((6.0 * i) * Sc / qm1 + self.lam(i)
                    + (8.0 * i) * Si * (ONE / qm1 + qpow(self.q, -2 * i)))

        b = (8.0 * Si) * (ONE / qm1 + qpow(self.q, -2)) + (6.0 * Sc) / qm1
        sup, _ = _sup_decreasing_quartic(self._nu_i, ONE,
                                         Interval(0.0, max(b.hi, 0.0)), ZERO,
                                         1, explicit=r)
        return sup

    def isolation_and_lognorm_constants(self, S: float, S_c: float):
        """(K, l, A) per the tail-trapping and comparison machinery."""
        K = self.isolation_index(S)
        l = self.uniform_lognorm(S)
        A = self.uniform_lognorm_variational(S, S_c)
        return K, l, A


def apply_symmetry(u: GeometricBound) -> GeometricBound:
    """The involution S(a_1, a_2, a_3, ...) = (-a_1, a_2, -a_3, ...)."""
    sign = np.where(np.arange(1, u.mh + 1) % 2 == 1, -1.0, 1.0)
    head = u.head * sign
    return GeometricBound(head, u.C, u.q)


def symmetry_signs(n: int) -> np.ndarray:
    return np.where(np.arange(1, n + 1) % 2 == 1, -1.0, 1.0)
