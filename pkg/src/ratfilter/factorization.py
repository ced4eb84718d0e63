"""Direct factorisations of the shifted matrices p_i B - A and the inner
filter operator G(Y) = sum_i w_i (p_i B - A)^{-1} B Y built on them."""
from __future__ import annotations

import threading
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CUTOFF = 500
PIVOT_THRESHOLD = 0.1

# scipy's dense lu_solve is not reentrant in every build (heap corruption under
# concurrent calls), so dense back-substitutions are serialised; SuperLU is not.
_DENSE_LOCK = threading.Lock()


class SingularPoleError(np.linalg.LinAlgError):
    def __init__(self, pole, detail=""):
        self.pole = complex(pole)
        super().__init__(f"p B - A is singular at pole {self.pole:.6g}" + (f": {detail}" if detail else ""))


class ShiftedFactor:
    """LU factors of K = pole * B - A, with K[row_permutation][:, col_permutation] = L U.

    Sparse systems use SuperLU with threshold partial pivoting and an
    approximate minimum degree ordering of K + K^T; below DENSE_CUTOFF a dense
    LAPACK LU is used instead.
    """

    def __init__(self, pencil, pole, dense_cutoff=DENSE_CUTOFF):
        self.shift = complex(pole)
        self.n = pencil.n
        K = (self.shift * pencil.B.to_scipy() - pencil.A.to_scipy()).tocsc()
        self.dense = self.n < dense_cutoff
        if self.dense:
            Kd = K.toarray()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)  # zero pivots are reported below
                lu, piv = sla.lu_factor(Kd, check_finite=False)
            d = np.abs(np.diag(lu))
            if not np.all(np.isfinite(d)) or d.min() == 0.0:
                raise SingularPoleError(pole, "zero pivot in dense LU")
            self._lu = (lu, piv)
        else:
            try:
                self._lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A",
                                     diag_pivot_thresh=PIVOT_THRESHOLD)
            except RuntimeError as exc:
                raise SingularPoleError(pole, str(exc)) from None

    @property
    def lower(self):
        if self.dense:
            lu = self._lu[0]
            return sp.csr_matrix(np.tril(lu, -1) + np.eye(self.n))
        return self._lu.L

    @property
    def upper(self):
        if self.dense:
            return sp.csr_matrix(np.triu(self._lu[0]))
        return self._lu.U

    @property
    def row_permutation(self):
        if self.dense:
            perm = np.arange(self.n)
            for i, p in enumerate(self._lu[1]):
                perm[i], perm[p] = perm[p], perm[i]
            return perm
        return np.argsort(self._lu.perm_r)

    @property
    def col_permutation(self):
        if self.dense:
            return np.arange(self.n)
        return np.argsort(self._lu.perm_c)

    def solve(self, rhs, adjoint=False):
        """K x = rhs, or K^H x = rhs when ``adjoint``."""
        rhs = np.asarray(rhs, dtype=complex)
        if rhs.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: factor is {self.n}, rhs has {rhs.shape[0]} rows")
        if self.dense:
            with _DENSE_LOCK:
                return sla.lu_solve(self._lu, rhs, trans=2 if adjoint else 0, check_finite=False)
        return self._lu.solve(rhs, trans="H" if adjoint else "N")


def factorize_shifted(pencil, pole, dense_cutoff=DENSE_CUTOFF):
    return ShiftedFactor(pencil, pole, dense_cutoff)


def solve(factor, rhs):
    return factor.solve(rhs)


class InnerFilterOperator:
    """G(Y) = sum_i w_i K_i^{-1} B Y for pre-factorised K_i.

    ``apply_count`` counts calls (one per block), ``column_count`` counts the
    vectors G was applied to and ``solve_count`` the back-substitutions.
    """

    def __init__(self, factors, weights, B, threads=1):
        if len(factors) != len(weights):
            raise ValueError("one weight per factor")
        self.factors = list(factors)
        self.weights = np.asarray(weights, dtype=complex)
        self.B = B
        self.threads = threads
        self.n = B.n_rows
        self.apply_count = 0
        self.column_count = 0
        self.solve_count = 0
        self._lock = threading.Lock()

    @property
    def k1(self):
        return len(self.factors)

    def _term(self, i, BY):
        return self.weights[i] * self.factors[i].solve(BY)

    def __call__(self, Y):
        Y = np.asarray(Y, dtype=complex)
        ncol = 1 if Y.ndim == 1 else Y.shape[1]
        BY = self.B.to_scipy() @ Y
        if self.threads > 1 and self.k1 > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                terms = list(pool.map(lambda i: self._term(i, BY), range(self.k1)))
        else:
            terms = (self._term(i, BY) for i in range(self.k1))
        out = np.zeros(BY.shape, dtype=complex)
        for t in terms:  # fixed ascending order
            out += t
        with self._lock:
            self.apply_count += 1
            self.column_count += ncol
            self.solve_count += ncol * self.k1
        return out

    def reset_counters(self):
        with self._lock:
            self.apply_count = self.column_count = self.solve_count = 0


def build_inner_operator(pencil, pw, threads=1, dense_cutoff=DENSE_CUTOFF):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            factors = list(pool.map(lambda p: ShiftedFactor(pencil, p, dense_cutoff), pw.poles))
    else:
        factors = [ShiftedFactor(pencil, p, dense_cutoff) for p in pw.poles]
    return InnerFilterOperator(factors, pw.weights, pencil.B, threads=threads)


def apply_simple_filter(pencil, pw, Y):
    return build_inner_operator(pencil, pw)(Y)
