"""Algebraic Vanka relaxation for saddle-point matrices.

A patch is one pressure DoF together with every velocity DoF it couples to
through ``B``.  Additive sweeps sum local corrections computed from one
global residual (optionally weighted by a one-sided partition of unity);
multiplicative sweeps visit patches in ascending pressure order and
recompute the patch residual each time.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import DenseLU, SingularMatrixError, as_csr, dense_solve


class VankaError(RuntimeError):
    pass


class VankaMode(str, enum.Enum):
    ADDITIVE_POU = "additive_pou"
    ADDITIVE_UNWEIGHTED = "additive_unweighted"
    MULTIPLICATIVE = "multiplicative"
    MULTIPLICATIVE_SYMMETRIZED = "multiplicative_symmetrized"

    @property
    def additive(self):
        return self in (VankaMode.ADDITIVE_POU, VankaMode.ADDITIVE_UNWEIGHTED)


@dataclass
class VankaPatch:
    pressure_dof: int
    dof_indices: np.ndarray
    local_matrix: DenseLU

    def solve(self, r):
        return self.local_matrix.solve(r)


def build_patches(K, n_velocity, drop_tol=0.0):
    """One patch per pressure row ``i``: ``{i}`` plus the velocity columns stored in row ``i``.

    Membership follows the stored sparsity pattern, explicit zeros included.
    ``drop_tol > 0`` ignores couplings below ``drop_tol * max_j |K[i, j]|``.
    """
    K = as_csr(K)
    n = K.shape[0]
    patches = []
    for i in range(n_velocity, n):
        cols = K.indices[K.indptr[i]:K.indptr[i + 1]]
        vals = np.abs(K.data[K.indptr[i]:K.indptr[i + 1]])
        keep = cols < n_velocity
        if drop_tol > 0:
            keep &= vals > drop_tol * vals.max()
        dofs = np.append(cols[keep], i)
        local = K[dofs][:, dofs].toarray()
        try:
            lu = DenseLU(local)
        except SingularMatrixError as exc:
            raise VankaError(f"patch of pressure DoF {i} is singular "
                             f"({len(dofs)} DoFs)") from exc
        patches.append(VankaPatch(i, dofs, lu))
    return patches


class VankaRelaxation:
    """Vanka smoother for ``K`` with patches built from its pressure rows.

    Parameters
    ----------
    K : sparse matrix
        Saddle-point operator, velocity DoFs first.
    n_velocity : int
        Number of velocity DoFs (the pressure block starts here).
    mode : VankaMode or str
    omega : float
        Damping of each sweep.
    """

    def __init__(self, K, n_velocity, mode=VankaMode.ADDITIVE_POU, omega=1.0,
                 patches=None, require_coverage=True):
        self.K = as_csr(K)
        self.n = self.K.shape[0]
        self.n_velocity = int(n_velocity)
        self.mode = VankaMode(mode)
        self.omega = float(omega)
        self.patches = patches if patches is not None else build_patches(self.K, n_velocity)
        mult = np.zeros(self.n)
        for p in self.patches:
            mult[p.dof_indices] += 1
        self.multiplicity = mult
        uncovered = np.flatnonzero(mult == 0)
        if require_coverage and uncovered.size:
            raise VankaError(f"{uncovered.size} DoFs are not covered by any patch "
                             f"(first: {uncovered[0]}); the smoother would be singular")
        if self.mode is VankaMode.ADDITIVE_POU:
            self.weights = np.divide(1.0, mult, out=np.zeros(self.n), where=mult > 0)
        else:
            self.weights = (mult > 0).astype(float)
        # CSR row blocks for patch-local residuals
        self._rows = [self.K[p.dof_indices] for p in self.patches]
        self._additive_op = None

    def with_mode(self, mode, omega=None):
        """Same patches, different mode or damping (factorizations are shared)."""
        return VankaRelaxation(self.K, self.n_velocity, mode,
                               self.omega if omega is None else omega,
                               patches=self.patches, require_coverage=False)

    @property
    def additive_operator(self):
        """Sparse ``W sum_i R_i^T K_i^-1 R_i`` (additive modes)."""
        if self._additive_op is None:
            rows, cols, vals = [], [], []
            for p in self.patches:
                d = p.dof_indices
                inv = p.solve(np.eye(len(d)))
                rows.append(np.repeat(d, len(d)))
                cols.append(np.tile(d, len(d)))
                vals.append(inv.ravel())
            S = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.n, self.n))
            self._additive_op = as_csr(sp.diags(self.weights) @ S)
        return self._additive_op

    def sweep(self, x, b, omega=None):
        """One relaxation sweep; ``x`` and ``b`` may be vectors or (n, m) blocks."""
        omega = self.omega if omega is None else omega
        x = np.array(x, dtype=float)
        b = np.asarray(b, dtype=float)
        if x.shape[0] != self.n or b.shape[0] != self.n:
            raise ValueError(f"sweep: expected length {self.n}, got {x.shape[0]} and {b.shape[0]}")
        if self.mode.additive:
            return x + omega * (self.additive_operator @ (b - self.K @ x))
        order = range(len(self.patches))
        self._forward(x, b, omega, order)
        if self.mode is VankaMode.MULTIPLICATIVE_SYMMETRIZED:
            self._forward(x, b, omega, reversed(order))
        return x

    def _forward(self, x, b, omega, order):
        for k in order:
            d = self.patches[k].dof_indices
            r = b[d] - self._rows[k] @ x
            x[d] += omega * self.patches[k].solve(r)

    __call__ = sweep

    def statistics(self):
        sizes = np.array([len(p.dof_indices) for p in self.patches])
        hist = np.bincount(sizes)
        return {
            "mode": self.mode.value,
            "omega": self.omega,
            "n": self.n,
            "n_patches": len(self.patches),
            "patch_size_min": int(sizes.min()) if sizes.size else 0,
            "patch_size_max": int(sizes.max()) if sizes.size else 0,
            "patch_size_histogram": {str(s): int(c) for s, c in enumerate(hist) if c},
            "covered": int(np.count_nonzero(self.multiplicity)),
            "uncovered": int(np.count_nonzero(self.multiplicity == 0)),
        }

    def statistics_json(self):
        return json.dumps(self.statistics(), indent=2)


def apply_relaxation(relax: VankaRelaxation, x, b, omega=None):
    return relax.sweep(x, b, omega)


def extract_m_inverse(relax: VankaRelaxation, include_damping=False):
    """Dense ``M^-1`` of the relaxation.

    Additive modes assemble ``W sum_i R_i^T K_i^-1 R_i`` directly; the
    multiplicative modes apply one sweep with ``x0 = 0`` to every unit
    vector.  By default the sweep is run with ``omega = 1`` so that the damped
    smoother is ``omega M^-1`` (additive) -- with ``include_damping=True`` the
    operator of the sweep as configured is returned instead, which differs
    for multiplicative modes.
    """
    omega = relax.omega if include_damping else 1.0
    if relax.mode.additive:
        return omega * relax.additive_operator.toarray()
    I = np.eye(relax.n)
    return relax.sweep(np.zeros_like(I), I, omega=omega)


def extract_m(relax: VankaRelaxation, include_damping=False):
    """``M = (M^-1)^-1``; raises `VankaError` if the smoother is not invertible."""
    Minv = extract_m_inverse(relax, include_damping)
    try:
        return dense_solve(Minv, np.eye(relax.n))
    except SingularMatrixError as exc:
        raise VankaError("relaxation does not define an invertible smoother") from exc


def symmetry_defect(M) -> float:
    """``|M - M^T|_max / |M|_max``."""
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    scale = np.abs(M).max()
    if scale == 0:
        return 0.0
    return float(np.abs(M - M.T).max() / scale)
