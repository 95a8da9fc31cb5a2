"""One-step propagation of the variational matrix in block form.

The frame carries

* ``Vxx``   -- the m x m leading block as a Lohner doubleton,
* ``near``  -- signed interval rows m+1..m2 of the leading columns,
* ``Cj``    -- far constants: |V_ij| <= Cj[j] q^{-i} for i > m2,
* ``z``     -- operator-norm bounds: ||(V_xy)_i*|| <= z_i (i <= m) and
               ||V_yy|| <= z_{m+1}, in the sup norm on the tail.

Per step the leading columns split into the identity-block flow and the
tail-block flow; each is integrated on its own and the results recombine by
the product rule, so norm-only data never contaminates the explicit block.
Heads follow the transition jets plus the signed integral of the coupling
from the columns' own tails; near rows advance by variation of constants
against lambda_k with signed interval drives; far constants by a certified
geometric envelope.  All within-step bounds are produced by one joint
bootstrap whose acceptance margins justify the first-exit argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .intervals import (IArray, Interval, ZERO, ONE, iexp, iexp_array,
                        iexpm1_over_array, _up, _upz, _pos_floor, _mk)
from .tails import GeometricBound, geom_sum_from, qpow
from .ks import KSField
from .lognorm import expm_upper
from .flow import (C0State, Doubleton, StepParams, StepRecord, Enclosure,
                   EnclosureFailure, lohner_advance, integrate)


class C1StepError(RuntimeError):
    pass


@dataclass
class C1Frame:
    Vxx: Doubleton             # m x m leading block
    near: IArray               # (m2-m) x m signed rows m+1..m2
    Cj: np.ndarray             # (m,) far tail constants per column, >= 0
    z: np.ndarray              # (m+1,) norm bounds for V_xy rows and V_yy

    @property
    def m(self) -> int:
        return len(self.Cj)

    @staticmethod
    def identity(m: int, m2: int, yy_norm: float = 1.0) -> "C1Frame":
        """Frame of the full-space identity: the tail-tail block has operator
        norm one.  Pass yy_norm=0 to track the leading block alone."""
        z = np.zeros(m + 1)
        z[m] = yy_norm
        return C1Frame(Doubleton.from_box(IArray.eye(m)),
                       IArray.zeros((m2 - m, m)), np.zeros(m), z)

    def hull(self) -> IArray:
        return self.Vxx.hull()

    def tail_constant_from(self, q: Fraction, m_from: int) -> np.ndarray:
        """Per-column constants c with |V_ij| <= c_j q^{-i} for i > m_from,
        folding the near rows into the geometric envelope."""
        m2 = self.m + self.near.shape[0]
        if m_from < self.m:
            raise ValueError("m_from below the explicit block")
        out = self.Cj.copy()
        nm = self.near.mag()
        for i in range(m_from + 1, m2 + 1):
            qi = qpow(q, i).hi
            out = np.maximum(out, _upz(nm[i - self.m - 1] * qi))
        return out

    def copy(self) -> "C1Frame":
        return C1Frame(self.Vxx.copy(), self.near.copy(), self.Cj.copy(),
                       self.z.copy())


@dataclass
class FlowEnvelope:
    """Within-step bounds for one family of columns and their drives."""
    head: IArray               # rows 1..m over the step, signed
    near: IArray               # rows m+1..m2 over the step, signed
    far: np.ndarray            # |v_kj(t)| <= far[j] q^{-k}, k > m2
    drive: IArray              # (DN(u) v_j)_k for k = 1..kex, signed
    coupling: IArray           # rows 1..m of the drive from tail rows only


@dataclass
class C1Enclosure:
    tilde: FlowEnvelope
    hat: FlowEnvelope
    z_bound: np.ndarray        # e^{J[0,h]} z  (EV_xy row norms, EV_yy norm)
    J: np.ndarray
    U1: np.ndarray


def _near_ops(field: KSField, m: int, m2: int, h: Interval):
    lam = IArray.from_intervals([field.lam(k) for k in range(m + 1, m2 + 1)])
    if np.any(lam.hi >= 0.0):
        raise C1StepError("variational near tail reaches unstable modes")
    dec = iexp_array(lam * h)
    phi = iexpm1_over_array(lam * h) * h
    return lam, dec, phi


def _bcast(x: IArray, shape) -> IArray:
    return IArray(np.broadcast_to(x.lo[:, None], shape).copy(),
                  np.broadcast_to(x.hi[:, None], shape).copy(), copy=False)


def _strict_inside(inner: IArray, outer: IArray) -> np.ndarray:
    strict = (inner.lo > outer.lo) & (inner.hi < outer.hi)
    exact0 = (inner.lo == 0.0) & (inner.hi == 0.0) \
        & (outer.lo == 0.0) & (outer.hi == 0.0)
    return strict | exact0


def _far_poly_level(field: KSField, E: GeometricBound, heads_mag: np.ndarray,
                    T: np.ndarray, kex: int) -> np.ndarray:
    """Dominating level of |drive_k| q^k / |lambda_k| for k > kex; past kex
    every convolution term reads a geometric tail at least once."""
    q = field.q
    mw = heads_mag.shape[0]
    qi = np.array([qpow(q, i).hi for i in range(1, mw + 1)])
    Gv = _upz(qi @ heads_mag)
    su = E.sup_vector(E.mh)
    qn = np.array([qpow(q, n).hi for n in range(1, E.mh + 1)])
    Gu = float(np.dot(su, qn)) * (1 + 1e-10)
    S1 = E.sup_tail_sum_from(1).hi
    W1 = _upz(heads_mag.sum(axis=0) + T * float(Interval.from_fraction(
        geom_sum_from(q, mw + 1)).hi))
    CE = _pos_floor(E.C.hi)
    Tf = _pos_floor(T)
    alpha = _upz(Tf * Gu + CE * Gv + CE * W1 + Tf * S1)
    beta = _upz(2.0 * CE * Tf)
    k1 = kex + 1
    lam1 = field.lam(k1)
    if lam1.hi >= 0.0 or k1 * k1 * float(field.nu) < 2.0:
        raise C1StepError("explicit variational tail range too short")
    return _upz(2.0 * k1 * (alpha + beta * k1) / (-lam1.hi))


def _pad(x: IArray, rel: float = 1e-6) -> IArray:
    return x.inflate(rel * x.mag())


def _flow_envelope(field: KSField, E: GeometricBound, head_base: IArray,
                   init_near: IArray, T0: np.ndarray, m: int, m2: int,
                   kex: int, h: Interval, couple_heads: bool,
                   max_iter: int = 8) -> FlowEnvelope:
    """Joint bootstrap: find (head, near, far) bounds valid on the whole step
    for columns whose head part obeys

        v_head(t) in head_base (+ int_0^t coupling from own tail rows),

    with near rows driven by variation of constants and far rows by the
    geometric envelope.  head_base must already enclose the tail-free part.
    """
    lam, dec, phi = _near_ops(field, m, m2, h)
    lam_far = np.array([field.lam(k).hi for k in range(m2 + 1, kex + 1)])
    if np.any(lam_far >= 0.0):
        raise C1StepError("variational far tail reaches unstable modes")
    qk = np.array([qpow(field.q, k).hi for k in range(m2 + 1, kex + 1)])
    nc = head_base.shape[1]
    shp = (m2 - m, nc)
    hiv = Interval(0.0, h.hi)
    zero_heads = np.zeros((m, nc))

    head_env = _pad(head_base)
    near_env = _pad(init_near.hull(IArray.zeros(shp)))
    T = np.maximum(1.02 * _pos_floor(T0), 0.0)

    for _ in range(max_iter):
        stack = IArray(np.vstack([head_env.lo, near_env.lo]),
                       np.vstack([head_env.hi, near_env.hi]), copy=False)
        drive = field.dn_apply_columns(E, stack, T, kex)
        tails = IArray(np.vstack([zero_heads, near_env.lo]),
                       np.vstack([zero_heads, near_env.hi]), copy=False)
        coupling = field.dn_apply_columns(E, tails, T, m) if couple_heads \
            else IArray.zeros((m, nc))

        need_head = head_base + coupling * hiv if couple_heads else head_base
        dn = drive.slice((slice(m, m2), slice(None)))
        need_near = init_near.hull(
            _bcast(dec, shp) * init_near + dn * _bcast(phi, shp))
        B = drive.mag()
        lvl = _upz(np.max(B[m2:] * (qk / (-lam_far))[:, None], axis=0))
        lvl = np.maximum(lvl, _far_poly_level(field, E, stack.mag(), T, kex))
        need_T = np.maximum(lvl, 1.02 * _pos_floor(T0))

        ok = np.all(_strict_inside(need_near, near_env)) \
            and np.all(need_T <= np.maximum(0.99 * T, 0.0) + 1e-300)
        if couple_heads:
            ok = ok and np.all(_strict_inside(need_head, head_env))
        if ok:
            return FlowEnvelope(head=head_env, near=near_env, far=T,
                                drive=drive, coupling=coupling)
        head_env = head_env.hull(_pad(need_head, 1e-3))
        near_env = near_env.hull(_pad(need_near, 1e-3))
        T = np.maximum(1.5 * need_T, T)
    raise C1StepError("column envelope failed to stabilize")


def _far_end_constant(field: KSField, E: GeometricBound, env: FlowEnvelope,
                      T0: np.ndarray, kex: int, h: Interval,
                      m2: int) -> np.ndarray:
    """sup over k > m2 of q^k (e^{lam_k h} T0 q^{-k} + |drive_k|(1-e)/|lam_k|)."""
    B = env.drive.mag()
    lam = IArray.from_intervals([field.lam(k) for k in range(m2 + 1, kex + 1)])
    decay = iexp_array(lam * h)
    one = np.ones(kex - m2)
    phi_hi = _up((one - np.minimum(decay.lo, 1.0)) / (-lam.hi))
    qkv = np.array([qpow(field.q, k).hi for k in range(m2 + 1, kex + 1)])
    vals = _upz(decay.hi[:, None] * _pos_floor(T0)[None, :]
                + (B[m2:] * qkv[:, None]) * phi_hi[:, None])
    out = np.max(vals, axis=0)
    stack_mag = np.vstack([env.head.mag(), env.near.mag()])
    decay1 = iexp(field.lam(kex + 1) * h).hi
    tail_val = _upz(decay1 * _pos_floor(T0)
                    + _far_poly_level(field, E, stack_mag, env.far, kex))
    return np.maximum(out, tail_val)


def c1_enclosure(field: KSField, state: C0State, frame: C1Frame,
                 rec: StepRecord, params: StepParams) -> C1Enclosure:
    m, m2 = state.m, state.m2
    E = rec.enc.E
    h = rec.h
    hiv = Interval(0.0, h.hi)
    kex = 2 * m2 + 1

    J = field.build_J(E, m)
    U1 = expm_upper(J, hiv, order=params.expm_order).hi
    z_bound = _upz(U1 @ _pos_floor(frame.z))

    # identity-block flow: signed head base from the transition jets
    tilde_base = IArray.eye(m).hull(rec.A_hull)
    tilde = _flow_envelope(field, E, tilde_base, IArray.zeros((m2 - m, m)),
                           np.zeros(m), m, m2, kex, h, couple_heads=True)

    # tail-block flow: head magnitudes through the comparison matrix
    qn2 = qpow(field.q, -(m2 + 1)).hi
    y0 = _upz(np.maximum(frame.near.mag().max(axis=0, initial=0.0),
                         _pos_floor(frame.Cj) * qn2))
    Bh = np.zeros((m + 1, m))
    Bh[m] = y0
    hat_mag = _upz(U1 @ Bh)[:m]
    hat_base = IArray(-hat_mag, hat_mag.copy(), copy=False)
    hat = _flow_envelope(field, E, hat_base, frame.near, frame.Cj,
                         m, m2, kex, h, couple_heads=False)

    return C1Enclosure(tilde=tilde, hat=hat, z_bound=z_bound, J=J, U1=U1)


def c1_step(field: KSField, state: C0State, frame: C1Frame,
            rec: StepRecord, params: StepParams,
            enc1: C1Enclosure | None = None) -> C1Frame:
    """Advance the frame across the step recorded in rec (which must carry
    the transition enclosures)."""
    if rec.A_full is None or rec.A_hull is None:
        raise C1StepError("step record lacks the transition enclosure")
    m, m2 = state.m, state.m2
    E = rec.enc.E
    h = rec.h
    enc1 = enc1 or c1_enclosure(field, state, frame, rec, params)
    kex = 2 * m2 + 1
    _, dec, phi = _near_ops(field, m, m2, h)
    shp = (m2 - m, m)

    # identity-block flow at the step end
    tilde = enc1.tilde
    tilde_near_end = tilde.drive.slice((slice(m, m2), slice(None))) \
        * _bcast(phi, shp)
    ctilde = _far_end_constant(field, E, tilde, np.zeros(m), kex, h, m2)
    gamma = tilde.coupling * Interval(0.0, h.hi)

    # tail-block flow at the step end
    hat = enc1.hat
    hat_near_end = _bcast(dec, shp) * frame.near \
        + hat.drive.slice((slice(m, m2), slice(None))) * _bcast(phi, shp)
    chat = _far_end_constant(field, E, hat, frame.Cj, kex, h, m2)
    lam_head = IArray.from_intervals([field.lam(i) for i in range(1, m + 1)])
    lam_mat = IArray(np.broadcast_to(lam_head.lo[:, None], (m, m)).copy(),
                     np.broadcast_to(lam_head.hi[:, None], (m, m)).copy(),
                     copy=False)
    vhat = (lam_mat * hat.head
            + hat.drive.slice((slice(0, m), slice(None)))) * Interval(0.0, h.hi)

    # recombination: norm-only data never mixes into the explicit block
    A = rec.A_full + gamma
    mid_iv = IArray(frame.Vxx.mid, frame.Vxx.mid.copy(), copy=False)
    center = A.dot(mid_iv) + vhat
    new_Vxx = lohner_advance(frame.Vxx, A, center)

    vxx_hull = frame.Vxx.hull()
    new_near = tilde_near_end.dot(vxx_hull) + hat_near_end
    vmag = _pos_floor(vxx_hull.mag())
    new_Cj = _upz(ctilde @ vmag + chat)

    Uh = expm_upper(enc1.J, h, order=params.expm_order).hi
    new_z = _upz(Uh @ _pos_floor(frame.z))

    return C1Frame(new_Vxx, new_near, new_Cj, new_z)


def c1_integrate(field: KSField, state: C0State, frame: C1Frame, T,
                 params: StepParams, observer=None):
    """Couple the state and frame forward to exactly t + T."""
    frames = [frame]
    prev = [state]

    def obs(new_state, rec):
        f = c1_step(field, prev[0], frames[-1], rec, params)
        frames.append(f)
        prev[0] = new_state
        if observer is not None:
            observer(new_state, f, rec)

    end, trace = integrate(field, state, T, params, observer=obs,
                           want_transition=True)
    return end, frames[-1], trace
