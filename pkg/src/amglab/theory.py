"""Optimal two-grid convergence for a matrix pencil ``(K, M)``.

For ``K v = lambda M v`` with eigenvalues ordered by decreasing ``|1 - lambda|``,
the interpolation spanned by the first ``n_c`` right eigenvectors and the
restriction spanned by the matching left eigenvectors give a two-grid
propagator ``(I - P (RKP)^-1 R K)(I - M^-1 K)`` with spectral radius
``|1 - lambda_{n_c + 1}|``.  Everything here is dense and meant for systems of
a few thousand unknowns at most.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import DenseLU, SingularMatrixError, dense_eig, dense_solve
from .vanka import symmetry_defect

MAX_EIGVEC_CONDITION = 1e12
PAIR_TOL = 1e-10
BIORTH_TOL = 1e-8


class TheoryError(RuntimeError):
    pass


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


@dataclass
class PencilDecomposition:
    lambdas: np.ndarray      # (n,) complex, eigensolver order
    V_right: np.ndarray      # (n, n), columns v_i with M^-1 K v_i = lambda_i v_i
    V_left: np.ndarray       # (n, n), V_left^* M V_right = I
    ordering: np.ndarray     # permutation, |1 - lambda| descending, pairs adjacent
    biorth_defect: float     # |V_left^* M V_right - I|_max
    diag_defect: float       # |V_left^* K V_right - Lambda|_max
    condition: float         # 2-norm condition number of V_right

    @property
    def n(self):
        return len(self.lambdas)

    @property
    def ordered_lambdas(self):
        return self.lambdas[self.ordering]

    @property
    def keys(self):
        return np.abs(1.0 - self.ordered_lambdas)


def order_by_distance_from_one(lambdas):
    """Stable descending sort on ``|1 - lambda|`` keeping conjugate pairs adjacent."""
    lam = np.asarray(lambdas, dtype=complex)
    keys = np.abs(1.0 - lam)
    order = np.argsort(-keys, kind="stable")
    placed = np.zeros(len(lam), dtype=bool)
    out = []
    for i in order:
        if placed[i]:
            continue
        out.append(i)
        placed[i] = True
        if abs(lam[i].imag) > PAIR_TOL * (1 + abs(lam[i])):
            dist = np.abs(lam - np.conj(lam[i]))
            dist[placed] = np.inf
            j = int(np.argmin(dist))
            if dist[j] <= PAIR_TOL * (1 + abs(lam[i])):
                out.append(j)
                placed[j] = True
    return np.array(out, dtype=np.int64)


def _pair_partner(lam_ordered):
    """``partner[k]`` = position of the conjugate of ordered eigenvalue ``k`` (or -1)."""
    n = len(lam_ordered)
    partner = np.full(n, -1)
    k = 0
    while k < n:
        z = lam_ordered[k]
        if (k + 1 < n and abs(z.imag) > PAIR_TOL * (1 + abs(z))
                and abs(lam_ordered[k + 1] - np.conj(z)) <= PAIR_TOL * (1 + abs(z))):
            partner[k], partner[k + 1] = k + 1, k
            k += 2
        else:
            k += 1
    return partner


def pencil_eigendecomposition(K, M_inv, biorth_tol=BIORTH_TOL) -> PencilDecomposition:
    """Eigendecomposition of ``M^-1 K`` with left vectors from ``V_right^-1 M^-1``.

    The decomposition is refused (`TheoryError`) when ``V_right`` is too
    ill-conditioned or the measured biorthogonality defect exceeds
    ``biorth_tol``.
    """
    K = _dense(K)
    M_inv = _dense(M_inv)
    if K.shape != M_inv.shape or K.shape[0] != K.shape[1]:
        raise ValueError(f"pencil needs square matrices of equal size, got {K.shape}, {M_inv.shape}")
    n = K.shape[0]
    C = M_inv @ K
    eig = dense_eig(C)
    lam, Vr = eig.values, eig.right_vectors
    cond = float(np.linalg.cond(Vr))
    if not cond <= MAX_EIGVEC_CONDITION:
        raise TheoryError(f"pencil is not numerically diagonalizable: cond(V) = {cond:.2e}")
    try:
        Vl_star = DenseLU(Vr).solve(M_inv.astype(complex))
        M = dense_solve(M_inv, np.eye(n))
    except SingularMatrixError as exc:
        raise TheoryError(f"singular eigenvector basis or smoother: {exc}") from exc
    I = np.eye(n)
    biorth = float(np.abs(Vl_star @ M @ Vr - I).max())
    diag = float(np.abs(Vl_star @ K @ Vr - np.diag(lam)).max())
    if not biorth <= biorth_tol:
        raise TheoryError(f"biorthogonality defect {biorth:.2e} exceeds {biorth_tol:.0e} "
                          f"(cond(V) = {cond:.2e})")
    ordering = order_by_distance_from_one(lam)
    return PencilDecomposition(lam, Vr, Vl_star.conj().T, ordering, biorth, diag, cond)


@dataclass
class OptimalOperators:
    P_sharp: np.ndarray
    R_sharp: np.ndarray
    n_c_requested: int
    n_c_eff: int
    pair_adjusted: bool


def effective_coarse_size(decomp: PencilDecomposition, n_c):
    """``(n_c_eff, adjusted)``: extend by one if a conjugate pair straddles the cut."""
    n = decomp.n
    if not 0 <= n_c <= n:
        raise ValueError(f"n_c = {n_c} outside 0..{n}")
    if n_c in (0, n):
        return n_c, False
    partner = _pair_partner(decomp.ordered_lambdas)
    if partner[n_c - 1] == n_c:
        return n_c + 1, True
    return n_c, False


def _realify(vectors, lam_ordered, partner, count):
    cols = []
    k = 0
    while k < count:
        v = vectors[:, k]
        if partner[k] == k + 1:
            cols += [v.real, v.imag]
            k += 2
        else:
            # real eigenvalue: eigenvector may carry an arbitrary complex phase
            j = np.argmax(np.abs(v))
            v = v * (abs(v[j]) / v[j]) if v[j] != 0 else v
            cols.append(v.real)
            k += 1
    n = vectors.shape[0]
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def optimal_operators(decomp: PencilDecomposition, n_c, hermitian=False) -> OptimalOperators:
    """Real optimal interpolation/restriction for the first ``n_c`` eigenvectors.

    Conjugate pairs ``(v, conj v)`` are replaced by ``(Re v, Im v)``, which spans
    the same real space.  With ``hermitian`` the restriction is ``P^T``.
    """
    n_eff, adjusted = effective_coarse_size(decomp, n_c)
    order = decomp.ordering
    lam = decomp.ordered_lambdas
    partner = _pair_partner(lam)
    P = _realify(decomp.V_right[:, order], lam, partner, n_eff)
    if hermitian:
        R = P.T.copy()
    else:
        R = _realify(decomp.V_left[:, order], lam, partner, n_eff).T
    return OptimalOperators(P, R, int(n_c), int(n_eff), bool(adjusted))


def predicted_factor(decomp: PencilDecomposition, n_c) -> float:
    """``|1 - lambda_{n_c + 1}|`` in the ``|1 - lambda|`` ordering, after pair adjustment."""
    if n_c >= decomp.n:
        raise ValueError(f"predicted_factor needs n_c < n = {decomp.n}")
    n_eff, _ = effective_coarse_size(decomp, n_c)
    if n_eff >= decomp.n:
        return 0.0
    return float(decomp.keys[n_eff])


def assemble_error_propagator(K, M_inv, P, R, nu1=1, nu2=0) -> np.ndarray:
    """Dense ``(I - M^-1 K)^nu2 (I - P (RKP)^-1 R K) (I - M^-1 K)^nu1``.

    ``M_inv`` must already contain the damping.
    """
    K = _dense(K)
    M_inv = _dense(M_inv)
    P = _dense(P)
    R = _dense(R)
    n = K.shape[0]
    I = np.eye(n)
    S = I - M_inv @ K
    if P.shape[1] == 0:
        E = I.copy()
    else:
        try:
            E = I - P @ dense_solve(R @ K @ P, R @ K)
        except SingularMatrixError as exc:
            raise TheoryError(f"coarse operator RKP is singular: {exc}") from exc
    return np.linalg.matrix_power(S, nu2) @ E @ np.linalg.matrix_power(S, nu1)


def spectral_radius_dense(E) -> float:
    if E.shape[0] == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(E)).max())


@dataclass
class IdentityReport:
    n: int
    n_c_requested: int
    n_c_eff: int
    predicted: float
    measured: float
    gap: float
    mode: str
    omega: float = float("nan")

    FIELDS = ("n", "n_c_requested", "n_c_eff", "predicted", "measured", "gap", "mode", "omega")

    def row(self):
        return [getattr(self, f) for f in self.FIELDS]


def verify_identity(K, M_inv, n_c, mode="nonsymmetric", decomp=None, omega=float("nan"),
                    sym_tol_K=1e-10, sym_tol_M=1e-8) -> IdentityReport:
    """Compare ``rho(E_TG(P#, R#))`` with ``|1 - lambda_{n_c+1}|``.

    ``mode="hermitian"`` uses ``R# = P#^T`` and requires symmetric ``K`` and ``M``.
    """
    if mode not in ("nonsymmetric", "hermitian"):
        raise ValueError(f"unknown mode {mode!r}")
    Kd = _dense(K)
    M_inv = _dense(M_inv)
    if mode == "hermitian":
        dK = symmetry_defect(Kd)
        dM = symmetry_defect(M_inv)
        if dK > sym_tol_K or dM > sym_tol_M:
            raise TheoryError(f"hermitian mode needs symmetric K and M (defects {dK:.2e}, "
                              f"{dM:.2e}); use mode='nonsymmetric'")
    if decomp is None:
        decomp = pencil_eigendecomposition(Kd, M_inv)
    ops = optimal_operators(decomp, n_c, hermitian=(mode == "hermitian"))
    E = assemble_error_propagator(Kd, M_inv, ops.P_sharp, ops.R_sharp, 1, 0)
    measured = spectral_radius_dense(E)
    predicted = 0.0 if ops.n_c_eff >= decomp.n else float(decomp.keys[ops.n_c_eff])
    return IdentityReport(decomp.n, int(n_c), ops.n_c_eff, predicted, measured,
                          abs(measured - predicted), mode, float(omega))


def write_reports_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(IdentityReport.FIELDS)
        for r in reports:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])


def report_dict(report: IdentityReport):
    return asdict(report)
