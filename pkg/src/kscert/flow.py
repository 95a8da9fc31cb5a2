"""Rigorous one-step integration of the KS system.

State layout
------------
* modes 1..m        -- Lohner doubleton mid + C[r] + B[r0], advanced by an
                       interval Taylor method of the m-mode projection plus
                       a comparison-matrix correction for everything the
                       projection drops;
* modes m+1..m2     -- plain interval coordinates ("near tail"), advanced by
                       variation of constants against the linear part;
* modes k > m2      -- |a_k| <= C q^{-k}, constant advanced by a certified
                       sup of the variation-of-constants bound.

The rough enclosure validates each explicit mode either by the first-order
differential inequality or, for strongly damped modes, by inwardness of the
field on the candidate boundary; the far tail is validated by the isolation
inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from fractions import Fraction

import numpy as np

from .intervals import IArray, Interval, ZERO, ONE, iexp, iexpm1_over, \
    iexp_array, iexpm1_over_array, mr_to_iarray, mr_from_iarray, mr_matmul, \
    mr_add, mr_scale, \
    interval_inverse, _prod_up, _add_up, _sum_up, _nudge_up, _mk
from .tails import GeometricBound, qpow
from .ks import KSField
from .lognorm import expm_upper


class EnclosureFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Doubleton
# ---------------------------------------------------------------------------

class Doubleton:
    """Lohner set representation mid + C [r] + B [r0].

    mid, C, B are point arrays; [r], [r0] are interval arrays containing 0.
    The same class covers interval vectors (r of shape (m,)) and interval
    matrices (r of shape (m, w)).
    """

    __slots__ = ("mid", "C", "r", "B", "r0")

    def __init__(self, mid, C, r: IArray, B, r0: IArray):
        self.mid = np.asarray(mid, dtype=np.float64)
        self.C = np.asarray(C, dtype=np.float64)
        self.B = np.asarray(B, dtype=np.float64)
        if not (r.contains_point(np.zeros(r.shape))
                and r0.contains_point(np.zeros(r0.shape))):
            raise ValueError("r and r0 must contain zero")
        self.r = r
        self.r0 = r0

    @staticmethod
    def from_box(x: IArray) -> "Doubleton":
        mid = x.mid()
        m = x.shape[0]
        return Doubleton(mid, np.eye(m), x - mid, np.eye(m), IArray.zeros(x.shape))

    @staticmethod
    def from_frame(center, frame, box: IArray) -> "Doubleton":
        """center + frame @ box with box containing 0."""
        m = len(center)
        return Doubleton(np.asarray(center, dtype=np.float64),
                         np.asarray(frame, dtype=np.float64), box,
                         np.eye(m), IArray.zeros(box.shape))

    def hull(self) -> IArray:
        c = IArray(self.C, self.C.copy(), copy=False)
        b = IArray(self.B, self.B.copy(), copy=False)
        return c.dot(self.r) + b.dot(self.r0) + self.mid

    def copy(self) -> "Doubleton":
        return Doubleton(self.mid.copy(), self.C.copy(), self.r.copy(),
                         self.B.copy(), self.r0.copy())


def lohner_advance(dbl: Doubleton, A: IArray, center_image: IArray) -> Doubleton:
    """Propagate a doubleton through the mean-value form

        x in center_image + A (x - mid),

    re-framing the second interval part by the QR trick."""
    new_mid = center_image.mid()

    AC = A.dot(IArray(dbl.C, dbl.C.copy(), copy=False))
    C1 = AC.mid()
    AB = A.dot(IArray(dbl.B, dbl.B.copy(), copy=False))
    Bm = AB.mid()
    diag = np.abs(np.diag(Bm))
    off = np.abs(Bm - np.diag(np.diag(Bm))).max() if Bm.size else 0.0
    if off <= 1e-12 * max(float(np.min(diag)), 0.0):
        # effectively diagonal: re-framing would only mix decay rates
        qq = np.eye(Bm.shape[0])
    else:
        qq, _ = np.linalg.qr(Bm)
        if not np.all(np.isfinite(qq)) or abs(np.linalg.det(qq)) < 1e-6:
            qq = np.eye(Bm.shape[0])
    qinv = interval_inverse(IArray(qq, qq.copy(), copy=False))

    slack = (center_image - new_mid) + (AC - C1).dot(dbl.r)
    r0_new = (qinv.dot(AB)).dot(dbl.r0) + qinv.dot(slack)
    return Doubleton(new_mid, C1, dbl.r, qq, r0_new)


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass
class C0State:
    x: Doubleton               # modes 1..m
    near: IArray               # modes m+1..m2
    C: Interval                # far tail constant, modes k > m2
    q: Fraction
    t: Fraction = Fraction(0)

    @property
    def m(self) -> int:
        return len(self.x.mid)

    @property
    def m2(self) -> int:
        return self.m + len(self.near)

    def bound(self) -> GeometricBound:
        head = self.x.hull()
        full = IArray(np.concatenate([head.lo, self.near.lo]),
                      np.concatenate([head.hi, self.near.hi]), copy=False)
        return GeometricBound(full, self.C, self.q)

    def is_zero(self) -> bool:
        h = self.bound()
        return (self.C.hi == 0.0 and np.all(h.head.lo == 0.0)
                and np.all(h.head.hi == 0.0))

    @staticmethod
    def from_bound(g: GeometricBound, m: int, t=Fraction(0)) -> "C0State":
        head = g.head.slice(slice(0, m))
        near = g.head.slice(slice(m, g.mh))
        return C0State(Doubleton.from_box(head), near, g.C, g.q, t)


@dataclass
class StepParams:
    order: int = 6             # Taylor order of the flow expansion
    var_order: int = 9         # Taylor order of the transition matrix
    tol: float = 1e-7          # target local error per step
    h_min: float = 1e-10
    lam_cap: float = 2.5       # stability cap: h <= lam_cap / |lambda_m|
    inflate_rel: float = 1e-2
    inflate_abs: float = 1e-14
    max_inflate: int = 6
    max_halvings: int = 24
    expm_order: int = 10
    grow: float = 1.2


@dataclass
class Enclosure:
    E: GeometricBound          # head over modes 1..m2, far constant beyond
    h: Interval                # validated step (time interval [0, h.hi] use)
    nonlin: IArray             # N_k(E) for k = 1..m2
    glue: IArray               # F_k - F^{(m)}_k over E, k = 1..m
    field_head: IArray         # F_k(E), k = 1..m2
    S_glob: float              # sup_k sup|E_k| q^k
    iso_K: int                 # isolation index certified <= m2 + 1
    drive: tuple | None = None # (kex, mags, pc) far-tail drive bounds


@dataclass
class StepRecord:
    t0: Fraction
    h: Interval
    enc: Enclosure
    A_full: IArray | None = None       # transition at t=h incl. defects
    A_hull: IArray | None = None       # transition enclosure over t in [0,h]
    U_head: np.ndarray | None = None   # upper bound of e^{J_head [0,h]}
    J_head: np.ndarray | None = None
    defect: np.ndarray | None = None   # inclusion correction added to heads
    h_sugg: float = math.inf           # accuracy-based next-step suggestion
    err_est: float = 0.0


# ---------------------------------------------------------------------------
# Jets of the m-mode projection (with a constant forcing)
# ---------------------------------------------------------------------------

class JetMachine:
    """Normalized Taylor coefficients of u' = F^{(m)}(u) + c and of the
    associated variational matrices, by convolution recurrences."""

    def __init__(self, field: KSField, m: int):
        self.field = field
        self.m = m
        k = np.arange(1, m + 1)
        self.kf = k.astype(np.float64)
        lam = field.lam_vec(m)
        self.lam = lam
        # gather indices for S1_k = sum_{n<k} a_n b_{k-n}
        K = k[:, None]
        N = k[None, :]
        self.mask1 = N < K
        self.idx1a = np.clip(N - 1, 0, m - 1)
        self.idx1b = np.clip(K - N - 1, 0, m - 1)
        # S2_k = sum_{n+k<=m} a_n b_{n+k}
        self.mask2 = (N + K) <= m
        self.idx2a = np.clip(N - 1, 0, m - 1)
        self.idx2b = np.clip(N + K - 1, 0, m - 1)

    def _quadratic(self, jets_so_far) -> IArray:
        """Cauchy product sum_s N-bilinear(u_s, u_{j-s}) at order j."""
        j = len(jets_so_far) - 1
        acc = None
        # pair (s, j-s); bilinear is symmetric in its two slots here because
        # it already contains both orderings of the second convolution
        for s in range(0, j // 2 + 1):
            t = j - s
            if s == t:
                term = self._half_bilinear(jets_so_far[s], jets_so_far[t])
            else:
                term = self._half_bilinear(jets_so_far[s], jets_so_far[t]) * 2.0
            acc = term if acc is None else acc + term
        return acc

    def _half_bilinear(self, a: IArray, b: IArray) -> IArray:
        """-(k/2) S1-sym + k S2-sym pieces so that summing ordered pairs of
        (s, j-s) reproduces the full jet convolution."""
        from .intervals import _imul, _isum
        s1lo, s1hi = _imul(a.lo[self.idx1a], a.hi[self.idx1a],
                           b.lo[self.idx1b], b.hi[self.idx1b])
        s1lo = np.where(self.mask1, s1lo, 0.0)
        s1hi = np.where(self.mask1, s1hi, 0.0)
        l1, h1 = _isum(s1lo, s1hi, 1)

        p1lo, p1hi = _imul(a.lo[self.idx2a], a.hi[self.idx2a],
                           b.lo[self.idx2b], b.hi[self.idx2b])
        p2lo, p2hi = _imul(b.lo[self.idx2a], b.hi[self.idx2a],
                           a.lo[self.idx2b], a.hi[self.idx2b])
        s2alo = np.where(self.mask2, p1lo, 0.0)
        s2ahi = np.where(self.mask2, p1hi, 0.0)
        s2blo = np.where(self.mask2, p2lo, 0.0)
        s2bhi = np.where(self.mask2, p2hi, 0.0)
        l2a, h2a = _isum(s2alo, s2ahi, 1)
        l2b, h2b = _isum(s2blo, s2bhi, 1)
        kf = IArray(self.kf, self.kf.copy(), copy=False)
        half = IArray(0.5 * self.kf, 0.5 * self.kf, copy=False)
        s2 = IArray(l2a, h2a, copy=False) + IArray(l2b, h2b, copy=False)
        s1 = IArray(l1, h1, copy=False)
        return kf * s2 - half * (s1 * 2.0)

    def flow_jets(self, u0: IArray, forcing: np.ndarray, orders: int):
        """Jets u_0..u_orders of u' = F^{(m)}(u) + forcing."""
        jets = [u0]
        fiv = IArray(forcing, forcing.copy(), copy=False)
        for j in range(orders):
            nl = self._quadratic(jets)
            rhs = self.lam * jets[j] + nl
            if j == 0:
                rhs = rhs + fiv
            jets.append(rhs * (1.0 / (j + 1.0)))
        return jets

    def dn_matrix(self, u: IArray) -> IArray:
        """DN^{(m)}(u): derivative of the projected nonlinearity at u."""
        m = self.m
        lo = np.zeros((m, m))
        hi = np.zeros((m, m))
        I = np.arange(1, m + 1)[:, None]
        K = np.arange(1, m + 1)[None, :]
        # term -2i u_{i-k} for k < i
        maskA = K < I
        idxA = np.clip(I - K - 1, 0, m - 1)
        cA = np.where(maskA, -2.0 * I, 0.0)
        from .intervals import _imul
        tAlo, tAhi = _imul(cA, cA, u.lo[idxA], u.hi[idxA])
        # term +2i u_{k-i} for k > i
        maskB = K > I
        idxB = np.clip(K - I - 1, 0, m - 1)
        cB = np.where(maskB, 2.0 * I, 0.0)
        tBlo, tBhi = _imul(cB, cB, u.lo[idxB], u.hi[idxB])
        # term +2i u_{i+k} for i+k <= m (includes diagonal 2i u_{2i})
        maskC = (I + K) <= m
        idxC = np.clip(I + K - 1, 0, m - 1)
        cC = np.where(maskC, 2.0 * I, 0.0)
        tClo, tChi = _imul(cC, cC, u.lo[idxC], u.hi[idxC])
        out = IArray(tAlo, tAhi, copy=False) + IArray(tBlo, tBhi, copy=False) \
            + IArray(tClo, tChi, copy=False)
        return out

    def variational_jets(self, u_jets, M0: IArray, orders: int):
        """Matrix jets of M' = (Lambda + DN^{(m)}(u(t))) M in mid-rad form.

        Returns a list of (mid, rad) pairs; convert with mr_to_iarray.
        """
        dns = [mr_from_iarray(self.dn_matrix(u)) for u in u_jets[:orders]]
        lm = self.lam.lo + 0.5 * (self.lam.hi - self.lam.lo)
        lr = np.maximum(self.lam.hi - lm, lm - self.lam.lo) * (1 + 1e-12) + 5e-324
        lm = lm[:, None]
        lr = lr[:, None]
        jets = [mr_from_iarray(M0)]
        for j in range(orders):
            am, ar = jets[j]
            # row scaling by lambda
            cm = lm * am
            cr = np.abs(lm) * ar + lr * (np.abs(am) + ar) + 4e-16 * np.abs(cm)
            cm, cr = cm, np.nextafter(cr * (1 + 1e-10) + 5e-324, math.inf)
            for s in range(0, j + 1):
                tm, tr = mr_matmul(dns[s][0], dns[s][1], *jets[j - s])
                cm, cr = mr_add(cm, cr, tm, tr)
            jets.append(mr_scale(cm, cr, Interval(1.0) / float(j + 1)))
        return jets


def eval_poly_jets(jets, h: Interval, upto: int) -> IArray:
    """sum_{j<=upto} jets[j] h^j by Horner evaluation."""
    acc = jets[upto]
    for j in range(upto - 1, -1, -1):
        acc = acc * h + jets[j]
    return acc


def eval_poly_jets_mr(jets_mr, h: Interval, upto: int):
    """Horner evaluation for mid-rad jets; returns an IArray."""
    am, ar = jets_mr[upto]
    for j in range(upto - 1, -1, -1):
        am, ar = mr_scale(am, ar, h)
        am, ar = mr_add(am, ar, *jets_mr[j])
    return mr_to_iarray(am, ar)


# ---------------------------------------------------------------------------
# Rough enclosure
# ---------------------------------------------------------------------------

def slaving_sup(field: KSField, E: GeometricBound, m2: int,
                drive=None) -> float:
    """Certified sup over k > m2 of |N_k(E)| q^k / |lambda_k|.

    The vector field points inwards on |a_k| = C q^{-k} for every k > m2
    exactly when C exceeds this level.
    """
    kex, mags, pc = drive if drive is not None else \
        field.tail_drive_bounds(E, m2)
    top = 0.0
    for k in range(m2 + 1, kex + 1):
        lam = field.lam(k)
        if lam.hi >= 0.0:
            raise EnclosureFailure("far tail reaches unstable modes")
        v = Interval(0.0, mags[k - m2 - 1]) * qpow(field.q, k) / Interval(-lam.hi)
        top = max(top, v.hi)
    # k > kex: PC(k)/|lambda_k| <= 2 PC(k)/(nu k^4), decreasing (deg PC = 2)
    k = kex + 1
    if k * k * float(field.nu) < 2.0:
        raise EnclosureFailure("explicit tail range too short")
    ki = Interval(float(k))
    v = (2.0 * pc.poly_at(k)) / (field._nu_i * ki.ipow(4))
    return max(top, v.hi)


def rough_enclosure(field: KSField, state: C0State, h0: float,
                    params: StepParams):
    """(Enclosure, accepted h).  Validates trajectory containment over
    [0, h] for every mode class."""
    m, m2 = state.m, state.m2
    X = state.bound()
    if state.is_zero():
        E = GeometricBound.zero(m2, state.q)
        z = IArray.zeros((m2,))
        return Enclosure(E, Interval(0.0, h0), z, IArray.zeros((m,)), z,
                         0.0, field.isolation_index(0.0))

    h = h0
    for _ in range(params.max_halvings):
        enc = _try_enclosure(field, state, X, h, params)
        if enc is not None:
            return enc
        h *= 0.5
        if h < params.h_min:
            break
    raise EnclosureFailure("enclosure failure")


def _try_enclosure(field: KSField, state: C0State, X: GeometricBound,
                   h: float, params: StepParams):
    m, m2 = state.m, state.m2
    hiv = Interval(0.0, h)
    C_state = state.C.hi
    C_E = Interval(0.0, max(1.05 * C_state, 1e-300))

    FX = field.eval_head(X, m2)
    cand = X.head.hull(X.head + FX * hiv)
    cand = cand.inflate(params.inflate_rel * cand.mag() + params.inflate_abs)

    lam = field.lam_vec(m2)
    for _ in range(params.max_inflate):
        Eg = GeometricBound(cand, C_E, state.q)
        # the far constant must exceed the slaving level so that the field
        # points inwards on every tail boundary |a_k| = C_E q^{-k}, k > m2
        drive = field.tail_drive_bounds(Eg, m2)
        lvl = slaving_sup(field, Eg, m2, drive)
        if C_E.hi < 1.02 * lvl:
            C_E = Interval(0.0, max(1.05 * lvl, 1.05 * C_state, 1e-300))
            Eg = GeometricBound(cand, C_E, state.q)
            drive = field.tail_drive_bounds(Eg, m2)
            if slaving_sup(field, Eg, m2, drive) > C_E.hi / 1.02:
                return None
        FE, NE = field.head_pair(Eg, m2)
        need = X.head + FE * hiv
        ok = (cand.lo <= need.lo) & (need.hi <= cand.hi)
        # dissipative inwardness on the candidate boundary
        for k in np.nonzero(~ok)[0]:
            lk = lam.at(int(k))
            if lk.hi >= 0.0:
                continue
            up = (lk * Interval(cand.hi[k]) + NE.at(int(k))).hi
            dn = (lk * Interval(cand.lo[k]) + NE.at(int(k))).lo
            xk = X.head.at(int(k))
            if up < 0.0 and dn > 0.0 and cand.hi[k] >= xk.hi and cand.lo[k] <= xk.lo:
                ok[k] = True
        if np.all(ok):
            if C_E.hi < C_state:
                return None
            S_glob = Eg.global_S()
            glue = field.glue_head(Eg, m, m)
            return Enclosure(Eg, Interval(0.0, h), NE, glue, FE, S_glob,
                             iso_K=m2 + 1, drive=drive)
        # grow only the failing modes: damped ones toward the slaving slab
        # N/|lambda|, the rest by the first-order requirement
        new_lo = cand.lo.copy()
        new_hi = cand.hi.copy()
        for k in np.nonzero(~ok)[0]:
            ki = int(k)
            lk = lam.at(ki)
            xk = X.head.at(ki)
            if lk.hi < 0.0:
                slab = NE.at(ki) / Interval(-lk.hi)
                tgt = xk.hull(slab)
            else:
                tgt = cand.at(ki).hull(need.at(ki))
            pad = params.inflate_rel * tgt.mag() + params.inflate_abs
            new_lo[ki] = min(new_lo[ki], tgt.lo - pad)
            new_hi[ki] = max(new_hi[ki], tgt.hi + pad)
        cand = IArray(new_lo, new_hi, copy=False)
    return None


# ---------------------------------------------------------------------------
# One step
# ---------------------------------------------------------------------------

def _far_tail_step(field: KSField, E: GeometricBound, C0: Interval,
                   m2: int, h: Interval, drive=None) -> Interval:
    """New far constant: certified sup over k > m2 of

        e^{lam_k h} C0 + |N_k(E)| q^k (1 - e^{lam_k h})/|lam_k|."""
    kex, mags, pc = drive if drive is not None else \
        field.tail_drive_bounds(E, m2)
    lam = IArray.from_intervals([field.lam(k) for k in range(m2 + 1, kex + 1)])
    if np.any(lam.hi >= 0.0):
        raise EnclosureFailure("far tail reaches unstable modes")
    decay = iexp_array(lam * h)
    one = np.ones_like(decay.lo)
    num = _mk(np.zeros_like(one), _nudge_up(_add_up(one, -decay.lo)))
    phi = num / _mk(-lam.hi, -lam.hi.copy())
    qk = np.array([(Interval(mags[k - m2 - 1]) * qpow(field.q, k)).hi
                   for k in range(m2 + 1, kex + 1)])
    v = decay * Interval(0.0, C0.hi) + _mk(np.zeros_like(qk), qk) * phi
    best = Interval(0.0, float(np.max(v.hi)))
    # beyond the explicit range: decay factor is monotone down in k (lambda
    # decreasing) and the drive/|lambda| ratio is dominated by 2 PC(k)/(nu k^4)
    k = kex + 1
    lamk = field.lam(k)
    if lamk.hi >= 0.0 or k * k * float(field.nu) < 2.0:
        raise EnclosureFailure("explicit tail range too short")
    ki = Interval(float(k))
    tail_v = iexp(lamk * h) * C0 + \
        (2.0 * pc.poly_at(k)) / (field._nu_i * ki.ipow(4))
    return Interval(0.0, max(best.hi, tail_v.hi))


def _near_tail_step(field: KSField, state: C0State, enc: Enclosure,
                    h: Interval) -> IArray:
    """Variation of constants for modes m+1..m2."""
    m, m2 = state.m, state.m2
    lam = IArray.from_intervals([field.lam(k) for k in range(m + 1, m2 + 1)])
    nk = enc.nonlin.slice(slice(m, m2))
    lh = lam * h
    ek = iexp_array(lh)
    phi = iexpm1_over_array(lh) * h            # (e^{lam h}-1)/lam >= 0
    return ek * state.near + nk * phi


def c0_step(field: KSField, state: C0State, enc: Enclosure, h: Interval,
            params: StepParams, jm: JetMachine | None = None,
            want_transition: bool = False, t_next: Fraction | None = None):
    """Advance the state by h; returns (new_state, StepRecord)."""
    m, m2 = state.m, state.m2
    jm = jm or JetMachine(field, m)
    p = params.order

    E = enc.E
    glue_mid = enc.glue.mid()
    grad = np.maximum(_prod_up(_add_up(enc.glue.hi, -enc.glue.lo), 0.5), 0.0)

    # comparison matrix for the leading block and its propagator over [0,h]
    J_head = field.head_comparison(E, m)
    U = expm_upper(J_head, Interval(0.0, h.hi), order=params.expm_order)
    grad_iv = IArray(np.zeros(m), grad, copy=False)

    # inclusion correction: |x_true - x_projected|(h) <= h * (U rad(glue))
    defect = (U.dot(grad_iv) * Interval(0.0, h.hi)).hi
    defect = np.maximum(defect, 0.0)

    mid_iv = IArray(state.x.mid, state.x.mid.copy(), copy=False)
    jets_mid = jm.flow_jets(mid_iv, glue_mid, p)
    Ehead = E.head.slice(slice(0, m))
    jets_E = jm.flow_jets(Ehead, glue_mid, max(p + 1, params.var_order))

    # point flow value with Lagrange remainder evaluated on the enclosure
    y_point = eval_poly_jets(jets_mid, h, p)
    rem = jets_E[p + 1] * h.ipow(p + 1)
    y_all = y_point + rem + IArray(-defect, defect, copy=False)

    # transition matrix of the projected flow over the initial hull,
    # remainder evaluated on the enclosure through M_enc; both initial
    # conditions ride in one batched recurrence
    pv = params.var_order
    U_hi = U.hi
    M0 = IArray(np.hstack([np.eye(m), -U_hi]),
                np.hstack([np.eye(m), U_hi.copy()]), copy=False)
    Mboth = jm.variational_jets(jets_E, M0, pv + 1)
    Mjets = [(mm[:, :m], rr[:, :m]) for mm, rr in Mboth[:pv + 1]]
    remm, remr = Mboth[pv + 1]
    A_gal = eval_poly_jets_mr(Mjets, h, pv) + \
        mr_to_iarray(remm[:, m:], remr[:, m:]) * h.ipow(pv + 1)

    new_x = lohner_advance(state.x, A_gal, y_all)
    new_near = _near_tail_step(field, state, enc, h)
    new_C = _far_tail_step(field, E, state.C, m2, h, drive=enc.drive)

    A_full = None
    A_hull = None
    if want_transition:
        # true variational head block = projected one + truncation defect
        dvar = _transition_defect(field, E, state, U_hi, h)
        A_full = A_gal + IArray(-dvar, dvar, copy=False)
        h0v = Interval(0.0, h.hi)
        A_hull = eval_poly_jets_mr(Mjets, h0v, pv) + \
            mr_to_iarray(remm[:, m:], remr[:, m:]) * h0v.ipow(pv + 1) + \
            IArray(-dvar, dvar.copy(), copy=False)

    new_state = C0State(new_x, new_near, new_C, state.q,
                        t_next if t_next is not None else state.t + Fraction(h.hi))
    err = float(np.max(rem.mag())) + float(np.max(defect)) if m else 0.0
    rec = StepRecord(t0=state.t, h=h, enc=enc, A_full=A_full, A_hull=A_hull,
                     U_head=U_hi, J_head=J_head, defect=defect,
                     h_sugg=accuracy_h(jets_E, p, params.tol), err_est=err)
    return new_state, rec


def _transition_defect(field: KSField, E: GeometricBound, state: C0State,
                       U_hi: np.ndarray, h: Interval) -> np.ndarray:
    """Componentwise bound for the difference between the true variational
    head block and the projected one over the step: h * U (D |M_enc|) with
    D_ik bounding |dF_i/du_k - dF^{(m)}_i/du_k| plus the spread of dF over E."""
    m = state.m
    w = E.head.width()
    sup = E.head.mag()
    D = np.empty((m, m))
    for i in range(1, m + 1):
        for k in range(1, m + 1):
            terms = w[abs(i - k) - 1] if i != k else 0.0
            l = i + k
            if l <= m:
                terms += w[l - 1]
            elif l <= E.mh:
                terms += sup[l - 1]
            else:
                terms += (E.C * qpow(E.q, -l)).hi
            D[i - 1, k - 1] = (Interval(2.0 * i) * Interval(terms)).hi
    U_iv = IArray(np.zeros_like(U_hi), U_hi, copy=False)
    D_iv = IArray(np.zeros_like(D), D, copy=False)
    inner = D_iv.dot(U_iv)
    out = (U_iv.dot(inner) * Interval(0.0, h.hi)).hi
    return np.maximum(out, 0.0)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def suggest_h0(field: KSField, params: StepParams) -> float:
    lam_m = field.lam(field.m).lo
    cap = params.lam_cap / abs(lam_m) if lam_m < 0 else 1.0
    return min(cap, 1e-2)


def accuracy_h(jets_E, p: int, tol: float) -> float:
    top = float(np.max(jets_E[p + 1].mag())) if jets_E else 0.0
    if top <= 0.0:
        return math.inf
    return (tol / top) ** (1.0 / (p + 1))


def integrate(field: KSField, state: C0State, T: Fraction,
              params: StepParams, observer=None, want_transition: bool = False,
              max_steps: int = 10 ** 6):
    """Iterate rough_enclosure + c0_step to exactly t = t0 + T."""
    T = Fraction(T)
    target = state.t + T
    jm = JetMachine(field, state.m)
    trace: list[StepRecord] = []
    h = suggest_h0(field, params)
    nsteps = 0
    while state.t < target:
        nsteps += 1
        if nsteps > max_steps:
            raise EnclosureFailure("step budget exhausted")
        rem_t = target - state.t
        h_try = min(h, float(rem_t) * (1.0 + 1e-12))
        for redo in range(4):
            enc = rough_enclosure(field, state, h_try, params)
            h_acc = enc.h.hi
            if Fraction(h_acc) >= rem_t:
                h_step = Interval.from_fraction(rem_t)
                t_next = target
            else:
                h_step = Interval(h_acc)
                t_next = state.t + Fraction(h_acc)
            new_state, rec = c0_step(field, state, enc, h_step, params, jm=jm,
                                     want_transition=want_transition,
                                     t_next=t_next)
            if rec.err_est <= 16.0 * params.tol or h_acc <= 4.0 * params.h_min:
                break
            h_try = min(h_acc * 0.5, rec.h_sugg)
        state = new_state
        trace.append(rec)
        if observer is not None:
            observer(state, rec)
        h = min(h_acc * params.grow, rec.h_sugg, suggest_h0(field, params))
    return state, trace
