"""Dense kernels for the projected eigenproblem: orthonormal bases, the
complex QZ algorithm and eigenvectors of triangular pencils.

Matrices here are small (at most a few times the block width), so the QZ
sweeps are written with plain 2x2 rotations on numpy slices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

RANK_TOL = 1e-12
DEFLATE_EPS = 1e-14
INFINITE_TOL = 1e-13


class QZConvergenceError(np.linalg.LinAlgError):
    pass


def orth(Y, rank_tol=RANK_TOL):
    """Orthonormal basis of range(Y) from a column-pivoted QR.

    Columns whose |r_jj| fall below rank_tol * |r_11| are dropped.
    """
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.size == 0 or not np.any(Y):
        raise ValueError("orth of a zero matrix")
    Q, R, _ = sla.qr(Y, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rank_tol * d[0]))
    return Q[:, :rank]


# ---------------------------------------------------------------- rotations

def _left_rot(x, y):
    """2x2 unitary acting on rows that sends (x, y) to (r, 0)."""
    rho = np.hypot(abs(x), abs(y))
    if rho == 0:
        return None
    return np.array([[np.conj(x), np.conj(y)], [-y, x]]) / rho


def _right_rot(a, b):
    """2x2 unitary acting on columns that sends the row (a, b) to (0, r)."""
    rho = np.hypot(abs(a), abs(b))
    if rho == 0:
        return None
    return np.array([[b, np.conj(a)], [-a, np.conj(b)]]) / rho


def _apply_left(G, M, i, cols):
    if G is not None:
        M[i:i + 2, cols] = G @ M[i:i + 2, cols]


def _apply_right(Z, M, i, rows):
    if Z is not None:
        M[rows, i:i + 2] = M[rows, i:i + 2] @ Z


def hessenberg_triangular(A, B):
    """Unitary Q, Z with Q* A Z upper Hessenberg and Q* B Z upper triangular."""
    H = np.array(A, dtype=complex)
    T = np.array(B, dtype=complex)
    n = H.shape[0]
    if H.shape != (n, n) or T.shape != (n, n):
        raise ValueError("hessenberg_triangular needs two square matrices of equal size")
    Q, T = sla.qr(T)
    H = Q.conj().T @ H
    Z = np.eye(n, dtype=complex)
    full = slice(0, n)
    for j in range(n - 2):
        for i in range(n - 1, j + 1, -1):
            G = _left_rot(H[i - 1, j], H[i, j])
            _apply_left(G, H, i - 1, slice(j, n))
            _apply_left(G, T, i - 1, slice(i - 1, n))
            if G is not None:
                Q[:, i - 1:i + 1] = Q[:, i - 1:i + 1] @ G.conj().T
            H[i, j] = 0.0
            Zr = _right_rot(T[i, i - 1], T[i, i])
            _apply_right(Zr, H, i - 1, full)
            _apply_right(Zr, T, i - 1, slice(0, i + 1))
            _apply_right(Zr, Z, i - 1, full)
            T[i, i - 1] = 0.0
    return H, T, Q, Z


# ---------------------------------------------------------------- QZ

@dataclass(eq=False)
class GeneralizedSchur:
    """P_L* M_A P_R = H_A and P_L* M_B P_R = H_B with H_A, H_B upper triangular."""

    H_A: np.ndarray
    H_B: np.ndarray
    P_L: np.ndarray
    P_R: np.ndarray

    @property
    def alpha(self):
        return np.diag(self.H_A).copy()

    @property
    def beta(self):
        return np.diag(self.H_B).copy()

    @property
    def indefinite(self):
        """Positions where both diagonal entries vanish (singular pencil)."""
        sa = max(np.linalg.norm(self.H_A), 1e-300)
        sb = max(np.linalg.norm(self.H_B), 1e-300)
        return (np.abs(self.alpha) <= INFINITE_TOL * sa) & (np.abs(self.beta) <= INFINITE_TOL * sb)

    def eigenvalues(self):
        """alpha / beta, with inf where beta is negligible."""
        a, b = self.alpha, self.beta
        sb = max(np.linalg.norm(self.H_B), 1e-300)
        out = np.full(a.shape, complex(np.inf))
        ok = np.abs(b) > INFINITE_TOL * sb
        out[ok] = a[ok] / b[ok]
        out[self.indefinite] = complex(np.nan)
        return out


def _wilkinson_shift(H, T, m):
    """Eigenvalue of the trailing 2x2 pencil closest to H[m, m] / T[m, m]."""
    a = H[m - 1:m + 1, m - 1:m + 1]
    b = T[m - 1:m + 1, m - 1:m + 1]
    # det(a - mu b) = 0 as a quadratic in mu
    c2 = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
    c1 = -(a[0, 0] * b[1, 1] + a[1, 1] * b[0, 0] - a[0, 1] * b[1, 0] - a[1, 0] * b[0, 1])
    c0 = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    rq = H[m, m] / T[m, m]
    if c2 == 0:
        return rq
    disc = np.sqrt(c1 * c1 - 4 * c2 * c0 + 0j)
    r1 = (-c1 + disc) / (2 * c2)
    r2 = (-c1 - disc) / (2 * c2)
    return r1 if abs(r1 - rq) <= abs(r2 - rq) else r2


def _push_infinite(H, T, Q, Z, k, hi):
    """Chase a zero T[k, k] down to T[hi, hi] and split off H[hi, hi - 1]."""
    n = H.shape[0]
    full = slice(0, n)
    for i in range(k, hi):
        G = _left_rot(T[i, i + 1], T[i + 1, i + 1])
        _apply_left(G, T, i, slice(i, n))
        _apply_left(G, H, i, slice(max(i - 1, 0), n))
        if G is not None:
            Q[:, i:i + 2] = Q[:, i:i + 2] @ G.conj().T
        T[i + 1, i + 1] = 0.0
        if i > 0:
            Zr = _right_rot(H[i + 1, i - 1], H[i + 1, i])
            _apply_right(Zr, H, i - 1, slice(0, min(i + 2, n)))
            _apply_right(Zr, T, i - 1, slice(0, i + 1))
            _apply_right(Zr, Z, i - 1, full)
            H[i + 1, i - 1] = 0.0
    Zr = _right_rot(H[hi, hi - 1], H[hi, hi])
    _apply_right(Zr, H, hi - 1, slice(0, hi + 1))
    _apply_right(Zr, T, hi - 1, slice(0, hi + 1))
    _apply_right(Zr, Z, hi - 1, full)
    H[hi, hi - 1] = 0.0


def qz(A, B, max_sweeps_per_dim=30):
    """Complex generalized Schur form by single-shift QZ.

    Deflation when |h_{j+1,j}| <= eps (|h_jj| + |h_{j+1,j+1}|); zeros on the
    diagonal of T are chased to the bottom of the active block and split off
    as infinite eigenvalues.
    """
    H, T, Q, Z = hessenberg_triangular(A, B)
    n = H.shape[0]
    if n <= 1:
        return GeneralizedSchur(H, T, Q, Z)
    full = slice(0, n)
    tnorm = max(np.linalg.norm(T), 1e-300)
    hnorm = max(np.linalg.norm(H), 1e-300)
    hi = n - 1
    sweeps = 0
    since_deflation = 0
    while hi > 0:
        # find the active unreduced block [lo, hi]
        lo = hi
        while lo > 0:
            sub = abs(H[lo, lo - 1])
            if sub <= DEFLATE_EPS * max(abs(H[lo - 1, lo - 1]) + abs(H[lo, lo]), 1e-3 * hnorm):
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            hi -= 1
            since_deflation = 0
            continue
        small = [k for k in range(lo, hi + 1) if abs(T[k, k]) <= DEFLATE_EPS * tnorm]
        if small:
            for k in small:
                T[k, k] = 0.0
            _push_infinite(H, T, Q, Z, small[0], hi)
            since_deflation = 0
            continue
        sweeps += 1
        since_deflation += 1
        if sweeps > max_sweeps_per_dim * n:
            raise QZConvergenceError(f"QZ did not converge in {sweeps - 1} sweeps")
        if since_deflation % 11 == 10:
            # exceptional shift breaks cycles of the Wilkinson shift
            mu = H[hi, hi] / T[hi, hi] + abs(H[hi, hi - 1]) / abs(T[hi - 1, hi - 1]) * (0.75 + 0.6j)
        else:
            mu = _wilkinson_shift(H, T, hi)
        x = H[lo, lo] - mu * T[lo, lo]
        y = H[lo + 1, lo]
        for i in range(lo, hi):
            G = _left_rot(x, y)
            _apply_left(G, H, i, slice(max(i - 1, lo), n))
            _apply_left(G, T, i, slice(i, n))
            if G is not None:
                Q[:, i:i + 2] = Q[:, i:i + 2] @ G.conj().T
            if i > lo:
                H[i + 1, i - 1] = 0.0
            Zr = _right_rot(T[i + 1, i], T[i + 1, i + 1])
            rows = slice(0, min(i + 3, hi + 1))
            _apply_right(Zr, H, i, rows)
            _apply_right(Zr, T, i, slice(0, i + 2))
            _apply_right(Zr, Z, i, full)
            T[i + 1, i] = 0.0
            if i + 2 <= hi:
                x, y = H[i + 1, i], H[i + 2, i]
    return GeneralizedSchur(np.triu(H), np.triu(T), Q, Z)


def eigenvalues(A, B):
    return qz(A, B).eigenvalues()


# ---------------------------------------------------------------- eigenvectors

def triangular_eigvecs(schur, sep_tol=1e-12):
    """Right and left eigenvectors of the triangular pencil (H_A, H_B).

    Column i of V_R solves (b_i H_A - a_i H_B) v = 0 with v supported on the
    first i + 1 entries; V_L holds the analogous left vectors. Vectors are
    normalised to unit 2-norm. Near-zero divisors from clustered eigenvalues
    are replaced by a small safe value and reported in ``perturbed``.
    """
    S, P = schur.H_A, schur.H_B
    n = S.shape[0]
    a, b = np.diag(S), np.diag(P)
    scale = max(np.linalg.norm(S), np.linalg.norm(P), 1e-300)
    tiny = sep_tol * scale
    VR = np.zeros((n, n), dtype=complex)
    VL = np.zeros((n, n), dtype=complex)
    perturbed = []
    for i in range(n):
        # normalise the pair (a_i, b_i) so the combination stays O(scale)
        nrm = np.hypot(abs(a[i]), abs(b[i]))
        ai, bi = (a[i] / nrm, b[i] / nrm) if nrm > 0 else (0.0, 1.0)
        M = bi * S - ai * P
        v = np.zeros(n, dtype=complex)
        v[i] = 1.0
        for j in range(i - 1, -1, -1):
            d = M[j, j]
            if abs(d) < tiny:
                d = tiny
                perturbed.append(i)
            v[j] = -(M[j, j + 1:i + 1] @ v[j + 1:i + 1]) / d
        VR[:, i] = v / np.linalg.norm(v)
        u = np.zeros(n, dtype=complex)
        u[i] = 1.0
        for j in range(i + 1, n):
            d = M[j, j]
            if abs(d) < tiny:
                d = tiny
                perturbed.append(i)
            # u^* M = 0  <=>  M^H u = 0
            u[j] = -np.conj(M[i:j, j]) @ u[i:j] / np.conj(d)
        VL[:, i] = u / np.linalg.norm(u)
    return VL, VR, sorted(set(perturbed))


@dataclass(eq=False)
class ReducedEigResult:
    eigenvalues: np.ndarray
    V_L: np.ndarray
    V_R: np.ndarray
    schur: GeneralizedSchur
    perturbed: list


def reduced_solve(M_A, M_B):
    schur = qz(M_A, M_B)
    VL, VR, perturbed = triangular_eigvecs(schur)
    return ReducedEigResult(schur.eigenvalues(), VL, VR, schur, perturbed)
