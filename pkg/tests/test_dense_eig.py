import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from ratfilter.dense_eig import (eigenvalues, hessenberg_triangular, orth, qz, reduced_solve,
                                 triangular_eigvecs)
from ratfilter.pencil import make_rng


def crand(shape, seed):
    rng = make_rng(seed)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def nearest_match_error(found, ref):
    """Greedy nearest pairing; returns the largest relative mismatch."""
    ref = list(ref)
    worst = 0.0
    for z in found:
        i = int(np.argmin([abs(z - r) for r in ref]))
        worst = max(worst, abs(z - ref[i]) / max(1.0, abs(ref[i])))
        ref.pop(i)
    return worst


def check_schur(A, B, s, tol=1e-10):
    for M, H in ((A, s.H_A), (B, s.H_B)):
        nrm = max(np.linalg.norm(M), 1e-300)
        assert np.linalg.norm(s.P_L.conj().T @ M @ s.P_R - H) <= tol * nrm
        assert np.linalg.norm(np.tril(H, -1)) <= 1e-12 * max(np.linalg.norm(H), 1e-300)
    n = A.shape[0]
    for U in (s.P_L, s.P_R):
        assert np.linalg.norm(U.conj().T @ U - np.eye(n)) < 1e-12


class TestOrth:
    def test_identity(self):
        V = orth(np.eye(4))
        assert V.shape == (4, 4)
        np.testing.assert_allclose(np.abs(V), np.abs(V) ** 2, atol=1e-15)  # entries are 0 or unimodular

    def test_rank_one(self):
        v = crand(8, 0)
        assert orth(np.column_stack([v, 2 * v])).shape[1] == 1

    def test_random_block(self):
        Y = crand((50, 10), 1)
        V = orth(Y)
        assert np.max(np.abs(V.conj().T @ V - np.eye(10))) < 1e-12
        assert np.linalg.norm(Y - V @ (V.conj().T @ Y)) < 1e-10 * np.linalg.norm(Y)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            orth(np.zeros((3, 2)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 40), st.integers(1, 12), st.integers(0, 2**31))
    def test_orthonormal_property(self, n, m, seed):
        m = min(m, n)
        V = orth(crand((n, m), seed))
        assert np.max(np.abs(V.conj().T @ V - np.eye(V.shape[1]))) < 1e-12


class TestHessenbergTriangular:
    def test_already_reduced(self):
        H = np.triu(crand((5, 5), 0), -1)
        T = np.triu(crand((5, 5), 1))
        Hh, Tt, Q, Z = hessenberg_triangular(H, T)
        np.testing.assert_allclose(np.abs(Q), np.eye(5), atol=1e-12)
        np.testing.assert_allclose(np.abs(Z), np.eye(5), atol=1e-12)

    def test_one_by_one(self):
        H, T, Q, Z = hessenberg_triangular(np.array([[2.0]]), np.array([[3.0]]))
        assert abs(Q[0, 0]) == 1 and abs(Z[0, 0]) == 1

    @pytest.mark.parametrize("seed", range(5))
    def test_reconstruction(self, seed):
        A, B = crand((8, 8), seed), crand((8, 8), seed + 10)
        H, T, Q, Z = hessenberg_triangular(A, B)
        assert np.linalg.norm(Q.conj().T @ A @ Z - H) < 1e-10 * np.linalg.norm(A)
        assert np.linalg.norm(Q.conj().T @ B @ Z - T) < 1e-10 * np.linalg.norm(B)
        assert np.linalg.norm(np.tril(H, -2)) == 0 and np.linalg.norm(np.tril(T, -1)) == 0
        assert np.linalg.norm(Q.conj().T @ Q - np.eye(8)) < 1e-10


class TestQZ:
    def test_diagonal(self):
        ev = eigenvalues(np.diag([1.0, 2.0]), np.eye(2))
        np.testing.assert_allclose(np.sort(ev.real), [1, 2])

    def test_standard_problem_vs_polynomial_roots(self):
        A = crand((6, 6), 3)
        roots = np.roots(np.poly(A))
        assert nearest_match_error(eigenvalues(A, np.eye(6)), roots) < 1e-8

    def test_defective(self):
        ev = eigenvalues(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))
        np.testing.assert_allclose(ev, [0, 0], atol=1e-12)

    def test_infinite_eigenvalue(self):
        A = np.diag([1.0, 2.0, 3.0]) + 0j
        B = np.diag([1.0, 0.0, 1.0]) + 0j
        ev = eigenvalues(A, B)
        assert np.sum(np.isinf(ev)) == 1
        np.testing.assert_allclose(np.sort(ev[np.isfinite(ev)].real), [1, 3])

    def test_singular_pencil_flagged(self):
        A = np.diag([1.0, 0.0]) + 0j
        B = np.diag([1.0, 0.0]) + 0j
        s = qz(A, B)
        assert s.indefinite.sum() == 1
        assert np.isnan(s.eigenvalues()).sum() == 1

    def test_hundred_random_pencils(self):
        rng = make_rng(42)
        for trial in range(100):
            n = int(rng.integers(1, 31))
            A, B = crand((n, n), 1000 + trial), crand((n, n), 2000 + trial)
            if trial % 10 == 0 and n > 2:  # rank-deficient B: infinite eigenvalues
                B[:, 0] = 0
            s = qz(A, B)
            check_schur(A, B, s)
            ev = s.eigenvalues()
            ref = sla.eigvals(A, B)
            fin = np.isfinite(ref) & (np.abs(ref) < 1e8)
            mine = ev[np.isfinite(ev) & (np.abs(ev) < 1e8)]
            assert mine.size == fin.sum()
            assert nearest_match_error(mine, ref[fin]) < 1e-8

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**31))
    def test_unitary_invariance(self, n, seed):
        A, B = crand((n, n), seed), crand((n, n), seed + 1)
        U = sla.qr(crand((n, n), seed + 2))[0]
        W = sla.qr(crand((n, n), seed + 3))[0]
        ev1 = eigenvalues(A, B)
        ev2 = eigenvalues(W.conj().T @ A @ U, W.conj().T @ B @ U)
        ok = np.abs(ev1) < 1e6
        assert nearest_match_error(ev1[ok], ev2) < 1e-8


class TestEigenvectors:
    def test_diagonal_triangular(self):
        s = qz(np.diag([1.0, 2.0, 3.0]) + 0j, np.eye(3) + 0j)
        VL, VR, perturbed = triangular_eigvecs(s)
        np.testing.assert_allclose(np.abs(VR), np.eye(3), atol=1e-14)
        np.testing.assert_allclose(np.abs(VL), np.eye(3), atol=1e-14)
        assert perturbed == []

    def test_two_by_two_closed_form(self):
        # (H_A, I) with H_A = [[1, 1], [0, 3]]: right vector for 3 is (1, 2)/sqrt(5)
        from ratfilter.dense_eig import GeneralizedSchur
        s = GeneralizedSchur(np.array([[1, 1], [0, 3]], dtype=complex), np.eye(2, dtype=complex),
                             np.eye(2, dtype=complex), np.eye(2, dtype=complex))
        VL, VR, _ = triangular_eigvecs(s)
        np.testing.assert_allclose(VR[:, 1] * np.sign(VR[1, 1].real), np.array([1, 2]) / np.sqrt(5), atol=1e-15)
        # left vector for 1: u* H_A = u* with u = (2, -1)/sqrt(5)
        np.testing.assert_allclose(VL[:, 0] * np.sign(VL[0, 0].real), np.array([2, -1]) / np.sqrt(5), atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_residuals(self, seed):
        A, B = crand((6, 6), seed), crand((6, 6), seed + 50)
        r = reduced_solve(A, B)
        HA, HB = r.schur.H_A, r.schur.H_B
        nrm = np.linalg.norm(HA)
        for i, lam in enumerate(r.eigenvalues):
            assert np.linalg.norm(HA @ r.V_R[:, i] - lam * HB @ r.V_R[:, i]) < 1e-10 * nrm * max(1, abs(lam))
            assert np.linalg.norm(r.V_L[:, i].conj() @ HA - lam * r.V_L[:, i].conj() @ HB) < 1e-10 * nrm * max(1, abs(lam))
            x = r.schur.P_R @ r.V_R[:, i]
            assert np.linalg.norm(A @ x - lam * B @ x) < 1e-10 * np.linalg.norm(A) * max(1, abs(lam))

    def test_reduced_diagonal(self):
        r = reduced_solve(np.diag([2.0, -1.0]) + 0j, np.diag([1.0, 2.0]) + 0j)
        np.testing.assert_allclose(np.sort(r.eigenvalues.real), [-0.5, 2])

    def test_reduced_vs_linearisation(self):
        A, B = crand((10, 10), 7), crand((10, 10), 8)
        ref = np.linalg.eigvals(np.linalg.solve(B, A))
        assert nearest_match_error(reduced_solve(A, B).eigenvalues, ref) < 1e-8
