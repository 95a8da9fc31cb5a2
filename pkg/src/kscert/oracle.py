"""Nonrigorous reference computations: Galerkin integration, event detection,
finite differences.

Used by tests and by the candidate search only.  Nothing here feeds any
certified inequality; the rigorous modules do not import this one.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def ks_rhs(n: int, nu: float):
    """Right-hand side of the n-mode Galerkin projection."""
    k = np.arange(1, n + 1)
    lam = k ** 2 * (1.0 - nu * k ** 2)

    def rhs(t, a):
        conv = np.convolve(a, a)
        s1 = np.zeros(n)
        s1[1:] = conv[0:n - 1]
        corr = np.correlate(a, a, mode="full")
        s2 = np.concatenate([corr[n:], [0.0]])
        return lam * a - k * s1 + 2 * k * s2

    return rhs


def ks_jacobian(n: int, nu: float):
    k = np.arange(1, n + 1)
    lam = k ** 2 * (1.0 - nu * k ** 2)
    I = np.arange(1, n + 1)[:, None]
    K = np.arange(1, n + 1)[None, :]

    def jac(a):
        absd = np.abs(I - K)
        u_abs = np.where(absd >= 1, a[np.clip(absd - 1, 0, n - 1)], 0.0)
        s_idx = I + K
        u_sum = np.where(s_idx <= n, a[np.clip(s_idx - 1, 0, n - 1)], 0.0)
        omega = np.where(I > K, -1.0, 1.0)
        D = 2.0 * I * (omega * u_abs + u_sum)
        d = np.where(2 * k <= n, a[np.clip(2 * k - 1, 0, n - 1)], 0.0)
        D[np.arange(n), np.arange(n)] = lam + 2.0 * k * d
        return D

    return jac


def galerkin_solve(nu: float, u0, n: int, T: float, rtol: float = 1e-11,
                   atol: float = 1e-16):
    """Dense-output trajectory of the n-mode projection."""
    if rtol > 1e-8:
        raise ValueError("oracle requires rtol <= 1e-8")
    a0 = np.zeros(n)
    u0 = np.asarray(u0, dtype=np.float64)
    a0[:min(len(u0), n)] = u0[:n]
    sol = solve_ivp(ks_rhs(n, nu), (0.0, T), a0, method="LSODA",
                    rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"oracle integration failed: {sol.message}")
    return sol


class KSOracle:
    """Convenience wrapper binding (nu, n) once."""

    def __init__(self, nu: float, n: int):
        self.nu = float(nu)
        self.n = int(n)
        self.rhs = ks_rhs(self.n, self.nu)
        self.jac = ks_jacobian(self.n, self.nu)

    def solve(self, u0, T: float, rtol: float = 1e-11, atol: float = 1e-16):
        a0 = np.zeros(self.n)
        u0 = np.asarray(u0, dtype=np.float64)
        a0[:min(len(u0), self.n)] = u0[:self.n]
        sol = solve_ivp(self.rhs, (0.0, T), a0, method="LSODA",
                        rtol=rtol, atol=atol, dense_output=True)
        if not sol.success:
            raise RuntimeError(f"oracle integration failed: {sol.message}")
        return sol

    def flow(self, u0, T: float, rtol: float = 1e-11):
        return self.solve(u0, T, rtol=rtol).sol(T)

    def section_crossing(self, u0, t_search=(0.05, 4.0), rtol: float = 1e-11,
                         direction: float = 0.0):
        """First time t in the window with a_1(t) = 0 (optionally filtered by
        the sign of a_1')."""
        sol = self.solve(u0, t_search[1], rtol=rtol)
        f = lambda t: sol.sol(t)[0]
        ts = np.linspace(t_search[0], t_search[1], 800)
        vals = np.array([f(t) for t in ts])
        for i in range(len(ts) - 1):
            if vals[i] == 0.0:
                continue
            if vals[i] * vals[i + 1] < 0:
                tc = brentq(f, ts[i], ts[i + 1], xtol=1e-15, rtol=8.9e-16)
                der = self.rhs(tc, sol.sol(tc))[0]
                if direction == 0.0 or der * direction > 0:
                    return tc, sol.sol(tc)
        raise RuntimeError("no section crossing found in window")

    def poincare(self, x_section, direction: float = 0.0, rtol: float = 1e-11,
                 t_search=(0.05, 4.0)):
        """First-return map on the section a_1 = 0: x_section lists a_2..a_n."""
        u0 = np.concatenate([[0.0], np.asarray(x_section, dtype=np.float64)])
        tc, a = self.section_crossing(u0, t_search=t_search, rtol=rtol,
                                      direction=direction)
        return a[1:], tc

    def variational_solve(self, u0, T: float, cols=None, rtol: float = 1e-11):
        """Joint integration of the trajectory and variational columns.

        Returns (sol, unpack) where unpack(y) -> (a, V) with V of shape
        (n, len(cols)).
        """
        n = self.n
        cols = list(range(n)) if cols is None else list(cols)
        nc = len(cols)
        a0 = np.zeros(n)
        u0 = np.asarray(u0, dtype=np.float64)
        a0[:min(len(u0), n)] = u0[:n]
        V0 = np.zeros((n, nc))
        for j, c in enumerate(cols):
            V0[c, j] = 1.0

        def rhs(t, y):
            a = y[:n]
            V = y[n:].reshape(n, nc)
            da = self.rhs(t, a)
            dV = self.jac(a) @ V
            return np.concatenate([da, dV.ravel()])

        y0 = np.concatenate([a0, V0.ravel()])
        sol = solve_ivp(rhs, (0.0, T), y0, method="LSODA", rtol=rtol,
                        atol=1e-16, dense_output=True)
        if not sol.success:
            raise RuntimeError(f"variational oracle failed: {sol.message}")

        def unpack(y):
            return y[:n], y[n:].reshape(n, nc)

        return sol, unpack


def finite_diff_jacobian(map_fn, x, eps: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, column per coordinate of x."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for j in range(len(x)):
        xp = x.copy()
        xp[j] += eps
        xm = x.copy()
        xm[j] -= eps
        cols.append((np.asarray(map_fn(xp)) - np.asarray(map_fn(xm))) / (2 * eps))
    return np.stack(cols, axis=1)
