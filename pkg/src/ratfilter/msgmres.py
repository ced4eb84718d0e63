"""Multi-shift GMRES: one Arnoldi basis of K_n(G, b) serves every system
(G - s I) x = b, since shifting G leaves the Krylov space unchanged.

The workspace keeps the basis and Hessenberg matrix so that shifts added
later are solved from the stored data and only extend the basis when the
stored dimension is not enough.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 200
BREAKDOWN_TOL = 1e-14
REORTH_RATIO = 1.0 / np.sqrt(2.0)


class MissingShiftError(KeyError):
    pass


def _givens(x, y):
    """(c, s, r) with [[c, s], [-conj(s), c]] @ [x, y] = [r, 0], c real."""
    if y == 0:
        return 1.0, 0j, x
    ax = abs(x)
    rho = np.hypot(ax, abs(y))
    if ax == 0:
        return 0.0, np.conj(y) / abs(y), abs(y)
    phase = x / ax
    return ax / rho, phase * np.conj(y) / rho, phase * rho


class _ShiftState:
    """Incremental QR of (H - s I) for one shift, by Givens rotations."""

    def __init__(self, shift, beta, tol):
        self.shift = shift
        self.tol = tol
        self.beta = beta
        self.cs = []
        self.sn = []
        self.R = np.zeros((0, 0), dtype=complex)
        self.g = np.array([beta], dtype=complex)
        self.converged = False
        self.iterations = 0
        self.solution = None
        self.residual = beta

    def push_column(self, h):
        """Absorb Hessenberg column j (length j + 2)."""
        j = len(self.cs)
        col = np.array(h, dtype=complex)
        col[j] -= self.shift
        for i in range(j):
            c, s = self.cs[i], self.sn[i]
            a, b = col[i], col[i + 1]
            col[i] = c * a + s * b
            col[i + 1] = -np.conj(s) * a + c * b
        c, s, r = _givens(col[j], col[j + 1])
        col[j] = r
        self.cs.append(c)
        self.sn.append(s)
        R = np.zeros((j + 1, j + 1), dtype=complex)
        R[:j, :j] = self.R
        R[: j + 1, j] = col[: j + 1]
        self.R = R
        g = np.zeros(j + 2, dtype=complex)
        g[: j + 1] = self.g
        g[j + 1] = -np.conj(s) * g[j]
        g[j] = c * g[j]
        self.g = g
        self.iterations = j + 1
        self.residual = abs(g[j + 1])

    def coefficients(self):
        n = len(self.cs)
        if n == 0:
            return np.zeros(0, dtype=complex)
        return sla.solve_triangular(self.R, self.g[:n], check_finite=False)


class KrylovWorkspace:
    """Arnoldi basis V (orthonormal, N x (n+1)) and Hessenberg H ((n+1) x n) of K_n(G, b)."""

    def __init__(self, G, b, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        b = np.asarray(b, dtype=complex)
        self.beta = float(np.linalg.norm(b))
        if self.beta == 0:
            raise ValueError("right-hand side must be nonzero")
        self.operator = G
        self.tol = tol
        self.max_iter = max_iter
        self.N = b.size
        self._V = np.zeros((self.N, 16), dtype=complex)
        self._V[:, 0] = b / self.beta
        self._H = np.zeros((17, 16), dtype=complex)
        self.n = 0
        self.op_applications = 0
        self.breakdown = False
        self._hnorm2 = 0.0
        self.states = {}

    @property
    def V(self):
        return self._V[:, : self.n + 1]

    @property
    def H(self):
        return self._H[: self.n + 1, : self.n]

    def _grow(self):
        cap = self._V.shape[1]
        V = np.zeros((self.N, 2 * cap), dtype=complex)
        V[:, :cap] = self._V
        H = np.zeros((2 * cap + 1, 2 * cap), dtype=complex)
        H[: cap + 1, :cap] = self._H
        self._V, self._H = V, H

    def step(self):
        """One Arnoldi step: apply G once, orthogonalise by modified Gram-Schmidt
        with a second pass when cancellation is severe."""
        if self.breakdown:
            return False
        j = self.n
        if j + 1 >= self._V.shape[1]:
            self._grow()
        w = np.asarray(self.operator(self._V[:, j]), dtype=complex).ravel()
        self.op_applications += 1
        h = np.zeros(j + 2, dtype=complex)
        norm0 = np.linalg.norm(w)
        for i in range(j + 1):
            h[i] = np.vdot(self._V[:, i], w)
            w -= h[i] * self._V[:, i]
        if np.linalg.norm(w) < REORTH_RATIO * norm0:
            for i in range(j + 1):
                d = np.vdot(self._V[:, i], w)
                w -= d * self._V[:, i]
                h[i] += d
        h[j + 1] = np.linalg.norm(w)
        self._hnorm2 += float(np.sum(np.abs(h) ** 2))
        self._H[: j + 2, j] = h
        self.n = j + 1
        if abs(h[j + 1]) <= BREAKDOWN_TOL * np.sqrt(self._hnorm2):
            self.breakdown = True
            self._H[j + 1, j] = 0.0
            h[j + 1] = 0.0
        else:
            self._V[:, j + 1] = w / h[j + 1]
        for st in self.states.values():
            if not st.converged:
                st.push_column(h)
                self._maybe_freeze(st)
        return True

    def _maybe_freeze(self, st):
        if st.residual <= st.tol * self.beta or self.breakdown:
            st.converged = st.residual <= st.tol * self.beta
            st.solution = self._V[:, : st.iterations] @ st.coefficients()

    def _add_state(self, shift, tol):
        st = _ShiftState(shift, self.beta, tol)
        self.states[shift] = st
        for j in range(self.n):
            if st.residual <= tol * self.beta:
                break
            st.push_column(self._H[: j + 2, j])
        if st.residual <= tol * self.beta or self.breakdown:
            self._maybe_freeze(st)
        return st

    def result(self, shifts):
        sols, res, its, conv = [], [], [], []
        for s in shifts:
            st = self.states[complex(s)]
            if st.solution is None:
                st.solution = self._V[:, : st.iterations] @ st.coefficients()
            sols.append(st.solution)
            res.append(st.residual)
            its.append(st.iterations)
            conv.append(st.converged)
        sol = np.column_stack(sols) if sols else np.zeros((self.N, 0), dtype=complex)
        return ShiftedSolveResult(np.asarray(shifts, dtype=complex), sol,
                                  np.asarray(res, dtype=float), np.asarray(its, dtype=int),
                                  np.asarray(conv, dtype=bool), self.beta)


@dataclass(eq=False)
class ShiftedSolveResult:
    shifts: np.ndarray
    solutions: np.ndarray  # N x len(shifts)
    residual_norms: np.ndarray  # least-squares residuals, absolute
    iterations: np.ndarray
    converged: np.ndarray
    rhs_norm: float

    @property
    def relative_residuals(self):
        return self.residual_norms / self.rhs_norm

    @property
    def max_iterations(self):
        return int(self.iterations.max()) if self.iterations.size else 0

    def solution(self, shift):
        hit = np.nonzero(np.abs(self.shifts - shift) <= 1e-14 * max(1.0, abs(shift)))[0]
        if hit.size == 0:
            raise MissingShiftError(shift)
        return self.solutions[:, hit[0]]


def arnoldi_extend(ws, G=None, steps=1):
    """Grow the workspace by up to ``steps`` Arnoldi steps (fewer on breakdown)."""
    if G is not None:
        ws.operator = G
    for _ in range(steps):
        if not ws.step():
            break
    return ws


def extend_shifts(ws, new_shifts, tol=None):
    """Solve (G - s I) x = b for ``new_shifts`` on the stored workspace.

    Shifts already solved are returned unchanged; the basis is only extended
    while some requested shift is above tolerance.
    """
    tol = ws.tol if tol is None else tol
    wanted = [complex(s) for s in new_shifts]
    for s in wanted:
        st = ws.states.get(s)
        if st is None or st.tol > tol:
            ws._add_state(s, tol)
    active = lambda: [ws.states[s] for s in wanted if not ws.states[s].converged]
    while active() and ws.n < ws.max_iter and not ws.breakdown:
        ws.step()
    return ws.result(wanted)


def solve_all_shifts(G, b, shifts, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, workspace=False):
    ws = KrylovWorkspace(G, b, tol=tol, max_iter=max_iter)
    res = extend_shifts(ws, shifts, tol)
    return (res, ws) if workspace else res


def combine_solutions(results, coeffs, Gb):
    """U = sum_j c_j x_j + direct_term * Gb."""
    U = coeffs.direct_term * np.asarray(Gb, dtype=complex)
    for c, s in zip(coeffs.weights, coeffs.shifts):
        U = U + c * results.solution(s)
    return U
