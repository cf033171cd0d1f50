"""Smoothed-aggregation setup and the block-diagonal monolithic hierarchy.

Velocity transfer operators come from the scalar component Laplacian (the
same aggregates are used for both components), pressure transfer operators
from the auxiliary P1 pressure Laplacian.  The two are combined into
``P = blockdiag(P_u, P_p)`` and coarse operators are Galerkin products.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sparse import DenseLU, as_csr, spectral_radius, triple_product, write_matrix_market


class AggregationError(RuntimeError):
    pass


def _inverse_diagonal(A, what="A"):
    d = A.diagonal()
    zero = np.flatnonzero(d == 0)
    if zero.size:
        raise AggregationError(f"{what} has a zero diagonal entry at row {zero[0]}")
    return 1.0 / d


def jacobi_weight(A, Dinv=None):
    """``4 / (3 rho(D^-1 A))``, the usual smoothing weight for SA."""
    if Dinv is None:
        Dinv = _inverse_diagonal(A)
    rho = spectral_radius(sp.diags(Dinv) @ A, tol=1e-3)
    return 4.0 / (3.0 * rho)


@dataclass(frozen=True)
class StrengthGraph:
    matrix: sp.csr_matrix   # nonnegative strengths, no diagonal
    theta: float


def evolution_soc(A, k=2, theta=4.0) -> StrengthGraph:
    """Evolution strength of connection.

    Each delta function ``e_i`` is relaxed by ``k`` weighted-Jacobi steps;
    neighbour ``j`` of ``i`` (in the pattern of ``A``) is strong when
    ``|z_j| / max_m |z_m| >= 1/theta``, the max running over the
    off-diagonal neighbours of ``i``.
    """
    if k < 1:
        raise ValueError("evolution_soc needs k >= 1")
    if theta < 1:
        raise ValueError("evolution_soc needs theta >= 1")
    A = as_csr(A)
    n = A.shape[0]
    Dinv = _inverse_diagonal(A)
    omega = jacobi_weight(A, Dinv)
    S = sp.identity(n, format="csr") - omega * (sp.diags(Dinv) @ A)
    Z = sp.identity(n, format="csr")
    for _ in range(k):
        Z = S @ Z
    # row i of Z^T is the evolved delta function e_i
    pattern = A.copy()
    pattern.setdiag(0)
    pattern.eliminate_zeros()
    pattern.data[:] = 1.0
    strength = as_csr(abs(Z.T.tocsr()).multiply(pattern))
    strength.eliminate_zeros()

    rowmax = np.zeros(n)
    nz_rows = np.diff(strength.indptr) > 0
    rowmax[nz_rows] = np.maximum.reduceat(strength.data, strength.indptr[:-1][nz_rows])
    rows = np.repeat(np.arange(n), np.diff(strength.indptr))
    strength.data /= rowmax[rows]
    strength.data[strength.data < 1.0 / theta] = 0.0
    strength.eliminate_zeros()
    return StrengthGraph(strength, float(theta))


@dataclass(frozen=True)
class Aggregation:
    node_to_aggregate: np.ndarray
    n_aggregates: int

    def members(self, a):
        return np.flatnonzero(self.node_to_aggregate == a)

    def sizes(self):
        return np.bincount(self.node_to_aggregate, minlength=self.n_aggregates)


def standard_aggregation(S) -> Aggregation:
    """Greedy aggregation on the (symmetrized) strength graph.

    Pass 1 seeds, in ascending node order, an aggregate from every node whose
    strong neighbourhood is still uncovered.  Pass 2 attaches each leftover
    node to the pass-1 aggregate it is most strongly connected to (ties to
    the lowest neighbour index).  Pass 3 turns isolated nodes into singletons.
    """
    C = S.matrix if isinstance(S, StrengthGraph) else S
    C = as_csr(C)
    C = as_csr(C.maximum(C.T))
    n = C.shape[0]
    ptr, idx, val = C.indptr, C.indices, C.data
    agg = np.full(n, -1, dtype=np.int64)
    count = 0
    for i in range(n):
        if agg[i] >= 0:
            continue
        nbrs = idx[ptr[i]:ptr[i + 1]]
        if nbrs.size and np.all(agg[nbrs] < 0):
            agg[i] = count
            agg[nbrs] = count
            count += 1
    first_pass = agg.copy()
    for i in np.flatnonzero(agg < 0):
        nbrs = idx[ptr[i]:ptr[i + 1]]
        w = val[ptr[i]:ptr[i + 1]]
        ok = first_pass[nbrs] >= 0
        if ok.any():
            cand, wc = nbrs[ok], w[ok]
            best = cand[wc == wc.max()].min()
            agg[i] = first_pass[best]
    for i in np.flatnonzero(agg < 0):
        agg[i] = count
        count += 1
    return Aggregation(agg, count)


def tentative_prolongation(agg: Aggregation, nullspace, tol=1e-10):
    """Per-aggregate orthonormalized near-nullspace; returns ``(T, B_coarse)``.

    ``T`` has ``m`` columns per aggregate and orthonormal columns, and
    ``T @ B_coarse`` reproduces ``nullspace``.
    """
    B = np.asarray(nullspace, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n, m = B.shape
    order = np.argsort(agg.node_to_aggregate, kind="stable")
    bounds = np.searchsorted(agg.node_to_aggregate[order], np.arange(agg.n_aggregates + 1))
    rows, cols, vals = [], [], []
    Bc = np.zeros((agg.n_aggregates * m, m))
    for a in range(agg.n_aggregates):
        nodes = order[bounds[a]:bounds[a + 1]]
        if len(nodes) < m:
            raise AggregationError(f"aggregate {a} has {len(nodes)} nodes for {m} nullspace vectors")
        Q, R = np.linalg.qr(B[nodes])
        sign = np.sign(np.diag(R))
        sign[sign == 0] = 1.0
        Q, R = Q * sign, R * sign[:, None]
        if np.min(np.abs(np.diag(R))) <= tol * max(1.0, np.abs(R).max()):
            raise AggregationError(f"nullspace is rank deficient on aggregate {a}")
        rows.append(np.repeat(nodes, m))
        cols.append(np.tile(a * m + np.arange(m), len(nodes)))
        vals.append(Q.ravel())
        Bc[a * m:(a + 1) * m] = R
    T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, agg.n_aggregates * m))
    return as_csr(T), Bc


def smooth_prolongation(A, T, omega=None):
    """``P = (I - omega D^-1 A) T``; ``omega`` defaults to `jacobi_weight`."""
    A = as_csr(A)
    if A.shape[1] != T.shape[0]:
        raise ValueError(f"smooth_prolongation: A is {A.shape}, T is {T.shape}")
    Dinv = _inverse_diagonal(A)
    if omega is None:
        omega = jacobi_weight(A, Dinv)
    if omega == 0:
        return as_csr(T)
    return as_csr(T - omega * (sp.diags(Dinv) @ (A @ T)))


def sa_prolongation(A, nullspace, k=2, theta=4.0, smooth=True):
    """One SA coarsening step; returns ``(P, aggregation, coarse nullspace)``."""
    S = evolution_soc(A, k=k, theta=theta)
    agg = standard_aggregation(S)
    T, Bc = tentative_prolongation(agg, nullspace)
    P = smooth_prolongation(A, T) if smooth else T
    return P, agg, Bc


@dataclass(frozen=True)
class SAParams:
    k: int = 2                  # evolution steps
    theta: float = 4.0          # evolution drop tolerance
    smooth: bool = True         # apply prolongation smoothing
    min_coarse: int = 8         # stop coarsening below this many pressure DoFs


@dataclass
class Level:
    """One level of the monolithic hierarchy.

    ``P``/``R`` map to the next coarser level and are ``None`` on the
    coarsest level.  ``A_velocity`` is the scalar component operator and
    ``A_pressure`` the auxiliary pressure Laplacian on this level.
    """

    K: sp.csr_matrix
    n_velocity: int
    n_pressure: int
    A_velocity: sp.csr_matrix
    A_pressure: sp.csr_matrix
    P: sp.csr_matrix = None
    R: sp.csr_matrix = None
    aggregates: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def field_offsets(self):
        return (0, self.n_velocity // 2, self.n_velocity, self.n)

    @cached_property
    def lu(self) -> DenseLU:
        """Dense factorization of ``K`` for coarsest-level solves."""
        return DenseLU(self.K.toarray())


def build_monolithic_hierarchy(system, A_p, levels=2, params=SAParams()):
    """Build ``levels`` levels of block-diagonal SA transfer operators.

    ``system`` is a `StokesSystem` (or anything with ``K``, ``n_velocity``,
    ``n_pressure``), ``A_p`` the pressure Laplacian on the pressure DoFs.
    """
    if levels < 2:
        raise ValueError("build_monolithic_hierarchy needs at least two levels")
    K = as_csr(system.K)
    nu, npr = system.n_velocity, system.n_pressure
    m = nu // 2
    Au = as_csr(K[:m, :m])
    Ap = as_csr(A_p)
    if Ap.shape != (npr, npr):
        raise ValueError(f"pressure Laplacian is {Ap.shape}, expected {(npr, npr)}")
    Bu, Bp = np.ones((m, 1)), np.ones((npr, 1))
    hierarchy = [Level(K, nu, npr, Au, Ap)]
    for lvl in range(levels - 1):
        fine = hierarchy[-1]
        Pu, agg_u, Bu = sa_prolongation(fine.A_velocity, Bu, params.k, params.theta, params.smooth)
        Pp, agg_p, Bp = sa_prolongation(fine.A_pressure, Bp, params.k, params.theta, params.smooth)
        for name, Pf in (("velocity", Pu), ("pressure", Pp)):
            if Pf.shape[1] == 0:
                raise AggregationError(f"aggregation collapsed on level {lvl} ({name} field)")
        P = as_csr(sp.block_diag([Pu, Pu, Pp]))
        R = as_csr(P.T)
        fine.P, fine.R = P, R
        fine.aggregates = {"velocity": agg_u, "pressure": agg_p}
        Kc = triple_product(R, fine.K, P)
        hierarchy.append(Level(Kc, 2 * Pu.shape[1], Pp.shape[1],
                               triple_product(as_csr(Pu.T), fine.A_velocity, Pu),
                               triple_product(as_csr(Pp.T), fine.A_pressure, Pp)))
        if hierarchy[-1].n_pressure < params.min_coarse:
            break
    return hierarchy


def two_level_hierarchy(K, P, R=None, n_velocity=None, n_velocity_coarse=None):
    """Two-level hierarchy for given transfer operators (``R`` defaults to ``P^T``).

    Useful for running cycles with non-SA interpolation such as the optimal
    eigenvector-based operators.  Field sizes only matter for reporting.
    """
    K = as_csr(K)
    P = as_csr(P)
    R = as_csr(P.T) if R is None else as_csr(R)
    n = K.shape[0]
    nv = n if n_velocity is None else int(n_velocity)
    Kc = triple_product(R, K, P)
    nvc = Kc.shape[0] if n_velocity_coarse is None else int(n_velocity_coarse)
    empty = sp.csr_matrix((0, 0))
    fine = Level(K, nv, n - nv, empty, empty, P, R)
    return [fine, Level(Kc, nvc, Kc.shape[0] - nvc, empty, empty)]


def coarsening_summary(hierarchy):
    rows = []
    for lvl, (f, c) in enumerate(zip(hierarchy[:-1], hierarchy[1:])):
        rows.append({
            "level": lvl,
            "fine": [f.n_velocity, f.n_pressure],
            "coarse": [c.n_velocity, c.n_pressure],
            "velocity_factor": f.n_velocity / c.n_velocity,
            "pressure_factor": f.n_pressure / c.n_pressure,
        })
    return rows


def dump_hierarchy(hierarchy, directory, params=SAParams()):
    """Per-level ``P``/``K`` in Matrix Market plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"parameters": asdict(params), "levels": []}
    for lvl, L in enumerate(hierarchy):
        write_matrix_market(directory / f"K_{lvl}.mtx", L.K)
        entry = {"level": lvl, "n": L.n, "n_velocity": L.n_velocity,
                 "n_pressure": L.n_pressure, "field_offsets": list(L.field_offsets),
                 "K": f"K_{lvl}.mtx"}
        if L.P is not None:
            write_matrix_market(directory / f"P_{lvl}.mtx", L.P)
            entry["P"] = f"P_{lvl}.mtx"
            entry["P_shape"] = list(L.P.shape)
        manifest["levels"].append(entry)
    (directory / "hierarchy.json").write_text(json.dumps(manifest, indent=2))
    return manifest
