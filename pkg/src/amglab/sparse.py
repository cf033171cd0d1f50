"""Sparse and dense linear-algebra substrate.

Sparse operators are carried as canonical ``scipy.sparse.csr_matrix`` objects
(sorted column indices, no duplicate entries); ``indptr``, ``indices`` and
``data`` play the roles of row offsets, column indices and values.  Complex
arithmetic only appears in the dense eigen-analysis.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SparseMatrix = sp.csr_matrix

# relative pivot threshold used by ``dense_solve``
PIVOT_TOL = 1e-12
EIG_RESIDUAL_TOL = 1e-8


class DimensionError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a factorization meets a pivot below tolerance."""

    def __init__(self, pivot_index, pivot=0.0, message=None):
        self.pivot_index = int(pivot_index)
        self.pivot = float(pivot)
        super().__init__(message or
                         f"matrix is numerically singular: pivot {self.pivot_index} "
                         f"has magnitude {self.pivot:.3e}")


class EigenSolverError(np.linalg.LinAlgError):
    def __init__(self, message, residual=np.nan):
        self.residual = residual
        super().__init__(message)


def as_csr(A) -> sp.csr_matrix:
    """Return ``A`` as a canonical CSR matrix (duplicates merged, indices sorted)."""
    if sp.issparse(A):
        A = sp.csr_matrix(A, copy=True)
    else:
        A = sp.csr_matrix(np.asarray(A, dtype=float))
    A.sum_duplicates()
    A.sort_indices()
    return A


def check_csr(A: sp.csr_matrix) -> None:
    """Assert the structural CSR invariants of ``A``."""
    nrows, ncols = A.shape
    ptr = A.indptr
    assert len(ptr) == nrows + 1
    assert np.all(np.diff(ptr) >= 0)
    assert ptr[-1] == len(A.data) == len(A.indices)
    for i in range(nrows):
        cols = A.indices[ptr[i]:ptr[i + 1]]
        assert np.all(np.diff(cols) > 0), f"row {i} has unsorted or duplicate columns"
        assert np.all((cols >= 0) & (cols < ncols))


def spmv(A: sp.csr_matrix, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[0] != A.shape[1]:
        raise DimensionError(f"spmv: matrix has {A.shape[1]} columns, vector has {x.shape[0]}")
    return A @ x


def triple_product(R, A, P) -> sp.csr_matrix:
    """Galerkin product ``R @ A @ P`` in canonical CSR form."""
    if R.shape[1] != A.shape[0] or A.shape[1] != P.shape[0]:
        raise DimensionError(
            f"triple_product: incompatible shapes {R.shape}, {A.shape}, {P.shape}")
    return as_csr(sp.csr_matrix(R) @ (sp.csr_matrix(A) @ sp.csr_matrix(P)))


class DenseLU:
    """Partial-pivoted LU factorization with a relative singularity check.

    The factorization is kept so repeated solves (coarse grids, Vanka patches)
    only pay for the triangular sweeps.
    """

    def __init__(self, A, pivot_tol=PIVOT_TOL):
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"dense_solve needs a square matrix, got {A.shape}")
        self.n = A.shape[0]
        scale = np.abs(A).max() if A.size else 0.0
        if scale == 0.0:
            raise SingularMatrixError(0, 0.0)
        with warnings.catch_warnings():
            # exact zero pivots are reported below as SingularMatrixError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self.lu, self.piv = scipy.linalg.lu_factor(A, check_finite=True)
        pivots = np.abs(np.diag(self.lu))
        bad = np.flatnonzero(pivots < pivot_tol * scale)
        if bad.size:
            raise SingularMatrixError(bad[0], pivots[bad[0]])

    def solve(self, B):
        return scipy.linalg.lu_solve((self.lu, self.piv), B, check_finite=False)


def dense_solve(A, B) -> np.ndarray:
    """Solve ``A X = B`` for dense ``A``; raises `SingularMatrixError` on tiny pivots."""
    A = np.asarray(A)
    B = np.asarray(B)
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"dense_solve: A is {A.shape}, B has {B.shape[0]} rows")
    return DenseLU(A).solve(B)


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray          # (n,) complex
    right_vectors: np.ndarray   # (n, n) complex, unit 2-norm columns
    residual_bound: float       # max_i |A v_i - l_i v_i| / (|A|_F |v_i|), plus n*eps


def eigen_residuals(A, values, vectors) -> np.ndarray:
    A = np.asarray(A)
    res = np.linalg.norm(A @ vectors - vectors * values, axis=0)
    scale = np.linalg.norm(A, "fro") * np.linalg.norm(vectors, axis=0)
    scale = np.where(scale == 0.0, 1.0, scale)
    return res / scale


def dense_eig(A, tol=EIG_RESIDUAL_TOL) -> EigenDecomposition:
    """All eigenpairs of a dense square matrix (LAPACK ``geev``).

    The returned residual bound is measured, not assumed; if it exceeds
    ``tol`` an `EigenSolverError` carrying the achieved residual is raised.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"dense_eig needs a square matrix, got {A.shape}")
    if A.shape[0] == 0:
        return EigenDecomposition(np.zeros(0, complex), np.zeros((0, 0), complex), 0.0)
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"QR iteration did not converge: {exc}") from exc
    w = w.astype(complex)
    V = V.astype(complex)
    # the residual evaluation itself carries about n*eps relative error
    bound = float(eigen_residuals(A, w, V).max()) + A.shape[0] * np.finfo(float).eps
    if not bound <= tol:
        raise EigenSolverError(f"eigen-residual {bound:.3e} exceeds {tol:.1e}", bound)
    return EigenDecomposition(w, V, bound)


def _to_dense(A) -> np.ndarray:
    if sp.issparse(A):
        return A.toarray()
    if isinstance(A, spla.LinearOperator):
        return A @ np.eye(A.shape[1])
    return np.asarray(A)


def spectral_radius(A, dense_fallback=False, tol=1e-8) -> float:
    """Largest eigenvalue modulus of ``A``.

    ``A`` may be a dense array, a sparse matrix or a ``LinearOperator``.  The
    dense path uses `dense_eig`; otherwise implicitly restarted Arnoldi
    (ARPACK) is run for the dominant eigenvalue.  Tiny operators and ARPACK
    failures drop to the dense path.
    """
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"spectral_radius needs a square operator, got {A.shape}")
    if n == 0:
        return 0.0
    if dense_fallback or n < 16:
        return float(np.abs(dense_eig(_to_dense(A)).values).max())
    v0 = np.random.default_rng(20240601).standard_normal(n)
    try:
        vals = spla.eigs(A, k=1, which="LM", tol=tol, v0=v0, ncv=min(n, 40),
                         maxiter=50 * n, return_eigenvectors=False)
        return float(np.abs(vals).max())
    except (spla.ArpackNoConvergence, spla.ArpackError):
        if n > 2500:
            raise
        return float(np.abs(dense_eig(_to_dense(A)).values).max())


# -- file formats --------------------------------------------------------------

def write_matrix_market(path, A, symmetric=False, comment="") -> None:
    A = sp.coo_matrix(A)
    kw = {"symmetry": "symmetric"} if symmetric else {}
    scipy.io.mmwrite(str(path), A, comment=comment, field="real", precision=17, **kw)


def read_matrix_market(path) -> sp.csr_matrix:
    path = Path(path)
    if not path.exists() and path.with_suffix(".mtx").exists():
        path = path.with_suffix(".mtx")
    return as_csr(scipy.io.mmread(str(path)))


def write_dense_csv(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in A:
            w.writerow([repr(float(v)) for v in row])


def read_dense_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=float)
