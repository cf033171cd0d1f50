from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from amglab.sparse import (DenseLU, DimensionError, EigenSolverError, SingularMatrixError,
                           as_csr, check_csr, dense_eig, dense_solve, read_dense_csv,
                           read_matrix_market, spectral_radius, spmv, triple_product,
                           write_dense_csv, write_matrix_market)


def random_csr(n, m, density, seed):
    return as_csr(sp.random(n, m, density=density, random_state=seed, format="csr"))


# -- spmv ------------------------------------------------------------------------

def test_spmv_identity():
    np.testing.assert_array_equal(spmv(as_csr(sp.eye(3)), [1.0, 2.0, 3.0]), [1, 2, 3])


def test_spmv_hand_case():
    A = as_csr(np.array([[2.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_array_equal(spmv(A, [1.0, 1.0]), [2.0, 0.0])


def test_spmv_matches_dense_oracle():
    A = random_csr(50, 50, 0.1, 3)
    x = np.random.default_rng(0).standard_normal(50)
    assert np.abs(spmv(A, x) - A.toarray() @ x).max() < 1e-13


def test_spmv_dimension_mismatch():
    with pytest.raises(DimensionError):
        spmv(as_csr(sp.eye(3)), np.ones(4))


# -- CSR invariants -----------------------------------------------------------

def test_as_csr_merges_duplicates_and_sorts():
    A = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    C = as_csr(A)
    check_csr(C)
    assert C.nnz == 2
    assert C[0, 1] == 3.0


def test_as_csr_keeps_explicit_zeros():
    A = sp.csr_matrix((np.array([0.0, 1.0]), np.array([0, 1]), np.array([0, 1, 2])), shape=(2, 2))
    assert as_csr(A).nnz == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.floats(0.0, 0.5), st.integers(0, 10_000))
def test_csr_invariants_property(n, m, density, seed):
    A = random_csr(n, m, density, seed)
    check_csr(A)
    assert A.indptr[-1] == len(A.data)


# -- triple product -------------------------------------------------------------

def test_triple_product_identity():
    A = random_csr(6, 6, 0.4, 1)
    I = as_csr(sp.eye(6))
    np.testing.assert_array_equal(triple_product(I, A, I).toarray(), A.toarray())


def test_triple_product_poisson_linear_interpolation():
    A = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(7, 7))
    P = np.zeros((7, 3))
    for j in range(3):
        c = 2 * j + 1
        P[c, j] = 1.0
        P[c - 1, j] += 0.5
        P[c + 1, j] += 0.5
    Ad, Pd = A.toarray(), P
    coarse = triple_product(as_csr(P.T), as_csr(A), as_csr(P))
    assert coarse.shape == (3, 3)
    assert np.abs(coarse.toarray() - Pd.T @ Ad @ Pd).max() < 1e-13
    # linear interpolation of the 1D Laplacian gives half the coarse stencil
    np.testing.assert_allclose(coarse.toarray(), 0.5 * sp.diags([-1, 2, -1], [-1, 0, 1],
                                                                shape=(3, 3)).toarray())


def test_triple_product_shape_contract():
    R, A, P = random_csr(4, 9, 0.5, 1), random_csr(9, 9, 0.3, 2), random_csr(9, 5, 0.5, 3)
    C = triple_product(R, A, P)
    assert C.shape == (4, 5)
    check_csr(C)


def test_triple_product_dimension_mismatch():
    with pytest.raises(DimensionError):
        triple_product(random_csr(3, 4, 0.5, 0), random_csr(5, 5, 0.5, 0), random_csr(5, 2, 0.5, 0))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 40), st.integers(0, 10_000))
def test_triple_product_dense_oracle_property(nr, n, nc, seed):
    R, A, P = random_csr(nr, n, 0.3, seed), random_csr(n, n, 0.3, seed + 1), random_csr(n, nc, 0.3, seed + 2)
    C = triple_product(R, A, P)
    ref = R.toarray() @ A.toarray() @ P.toarray()
    scale = max(np.linalg.norm(A.toarray()), 1.0)
    assert np.abs(C.toarray() - ref).max() <= 1e-12 * scale
    check_csr(C)


# -- dense solve ---------------------------------------------------------------

def test_dense_solve_identity():
    B = np.random.default_rng(1).standard_normal((4, 3))
    np.testing.assert_array_equal(dense_solve(np.eye(4), B), B)


def _rational_solve(A, b):
    n = len(b)
    M = [[A[i][j] for j in range(n)] + [b[i]] for i in range(n)]
    for k in range(n):
        p = next(i for i in range(k, n) if M[i][k] != 0)
        M[k], M[p] = M[p], M[k]
        for i in range(n):
            if i != k:
                f = M[i][k] / M[k][k]
                M[i] = [a - f * c for a, c in zip(M[i], M[k])]
    return [M[i][n] / M[i][i] for i in range(n)]


def test_dense_solve_hilbert_against_rational_oracle():
    n = 4
    H = [[Fraction(1, i + j + 1) for j in range(n)] for i in range(n)]
    exact = _rational_solve(H, [Fraction(1)] + [Fraction(0)] * (n - 1))
    assert exact == [16, -120, 240, -140]
    x = dense_solve(np.array(H, dtype=float), np.eye(n)[:, 0])
    np.testing.assert_allclose(x, [float(v) for v in exact], rtol=0, atol=1e-7)


def test_dense_solve_zero_matrix_is_singular():
    with pytest.raises(SingularMatrixError) as info:
        dense_solve(np.zeros((3, 3)), np.ones(3))
    assert info.value.pivot_index == 0


def test_dense_solve_rank_deficient_reports_pivot():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 0.0, 1.0]])
    with pytest.raises(SingularMatrixError) as info:
        DenseLU(A)
    assert info.value.pivot_index == 2
    assert info.value.pivot < 1e-12 * 6


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 25), st.integers(0, 10_000))
def test_dense_solve_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    Q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q1 @ np.diag(np.logspace(0, rng.uniform(0, 6), n)) @ Q2
    B = rng.standard_normal((n, 2))
    X = dense_solve(A, B)
    bound = 1e-10 * np.linalg.cond(A) * np.linalg.norm(A) * np.linalg.norm(X)
    assert np.linalg.norm(A @ X - B) <= max(bound, 1e-12)


# -- eigen --------------------------------------------------------------------

def test_dense_eig_diagonal():
    d = dense_eig(np.diag([3.0, 1.0, 2.0]))
    assert sorted(d.values.real) == [1.0, 2.0, 3.0]
    assert d.residual_bound <= 3 * np.finfo(float).eps


def test_dense_eig_rotation():
    d = dense_eig(np.array([[0.0, -1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(sorted(d.values, key=lambda z: z.imag), [-1j, 1j], atol=1e-15)


def test_dense_eig_random_residuals():
    A = np.random.default_rng(7).standard_normal((100, 100))
    d = dense_eig(A)
    res = np.linalg.norm(A @ d.right_vectors - d.right_vectors * d.values, axis=0)
    assert res.max() < 1e-8
    assert d.residual_bound < 1e-8


def test_dense_eig_reports_residual_when_tolerance_unmet():
    A = np.random.default_rng(7).standard_normal((30, 30))
    with pytest.raises(EigenSolverError) as info:
        dense_eig(A, tol=0.0)
    assert info.value.residual > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_dense_eig_conjugate_pairs_property(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    d = dense_eig(A)
    nrm = np.linalg.norm(A, "fro")
    for z, v in zip(d.values, d.right_vectors.T):
        assert np.linalg.norm(A @ v - z * v) <= d.residual_bound * nrm * np.linalg.norm(v) * (1 + 1e-12)
        if abs(z.imag) > 1e-12:
            assert np.abs(d.values - np.conj(z)).min() < 1e-10


def test_spectral_radius_small_cases():
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)
    assert spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]])) == 0.0


def test_spectral_radius_arnoldi_vs_dense():
    A = np.random.default_rng(11).standard_normal((200, 200))
    dense = spectral_radius(A, dense_fallback=True)
    arnoldi = spectral_radius(sp.csr_matrix(A))
    assert abs(arnoldi - dense) / dense < 1e-6


# -- file formats --------------------------------------------------------------

def test_matrix_market_roundtrip(tmp_path):
    A = random_csr(12, 12, 0.3, 5)
    write_matrix_market(tmp_path / "a.mtx", A)
    B = read_matrix_market(tmp_path / "a.mtx")
    np.testing.assert_array_equal(A.toarray(), B.toarray())


def test_matrix_market_symmetric_roundtrip(tmp_path):
    A = random_csr(10, 10, 0.3, 6)
    A = as_csr(A + A.T)
    write_matrix_market(tmp_path / "s.mtx", A, symmetric=True)
    assert "symmetric" in (tmp_path / "s.mtx").read_text().splitlines()[0]
    np.testing.assert_array_equal(read_matrix_market(tmp_path / "s.mtx").toarray(), A.toarray())


def test_dense_csv_roundtrip_is_exact(tmp_path):
    A = np.random.default_rng(2).standard_normal((5, 4))
    write_dense_csv(tmp_path / "a.csv", A)
    np.testing.assert_array_equal(read_dense_csv(tmp_path / "a.csv"), A)
