"""P2/P1 Taylor-Hood discretization of the Stokes problem.

The full DoF vector is laid out as ``[u_x(nodes), u_y(nodes), p(vertices)]``
where the P2 nodes are the mesh vertices followed by the edge midpoints.
Dirichlet velocity DoFs are eliminated symmetrically, so `StokesSystem.K`
is the reduced saddle-point matrix ``[[A, B^T], [B, 0]]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import DIRICHLET, NEUMANN, MeshError, TriMesh, validate_mesh
from .sparse import as_csr, write_matrix_market


class AssemblyError(ValueError):
    pass


# 7-point degree-5 rule (Radon); barycentric points, weights sum to one
_r15 = np.sqrt(15.0)
_a1, _b1 = (6 - _r15) / 21, (9 + 2 * _r15) / 21
_a2, _b2 = (6 + _r15) / 21, (9 - 2 * _r15) / 21
QUAD_POINTS = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_a1, _a1, _b1], [_a1, _b1, _a1], [_b1, _a1, _a1],
    [_a2, _a2, _b2], [_a2, _b2, _a2], [_b2, _a2, _a2],
])
QUAD_WEIGHTS = np.array([9 / 40] + [(155 - _r15) / 1200] * 3 + [(155 + _r15) / 1200] * 3)
QUAD_DEGREE = 5

# 3-point Gauss-Legendre on [0, 1]
EDGE_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5 / 18, 8 / 18, 5 / 18])

# local P2 numbering: vertices 0..2, then midpoints of the edges opposite 0..2
_EDGE_PAIRS = ((1, 2), (2, 0), (0, 1))


def p2_values(lam):
    """P2 basis values at barycentric points ``lam`` (q, 3) -> (q, 6)."""
    lam = np.atleast_2d(lam)
    out = np.empty((len(lam), 6))
    out[:, :3] = lam * (2 * lam - 1)
    for k, (b, c) in enumerate(_EDGE_PAIRS):
        out[:, 3 + k] = 4 * lam[:, b] * lam[:, c]
    return out


def p2_barycentric_derivatives(lam):
    """d(phi_i)/d(lambda_k) at points ``lam`` (q, 3) -> (q, 6, 3)."""
    lam = np.atleast_2d(lam)
    out = np.zeros((len(lam), 6, 3))
    for k in range(3):
        out[:, k, k] = 4 * lam[:, k] - 1
    for k, (b, c) in enumerate(_EDGE_PAIRS):
        out[:, 3 + k, b] = 4 * lam[:, c]
        out[:, 3 + k, c] = 4 * lam[:, b]
    return out


def barycentric_gradients(mesh: TriMesh):
    """Constant gradients of the barycentric coordinates, (nt, 3, 2), and areas."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas()
    x, y = p[..., 0], p[..., 1]
    g = np.empty((mesh.n_triangles, 3, 2))
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        g[:, k, 0] = y[:, i] - y[:, j]
        g[:, k, 1] = x[:, j] - x[:, i]
    return g / (2 * area[:, None, None]), area


def quadrature_points(mesh: TriMesh, lam=QUAD_POINTS):
    """Physical coordinates of barycentric points on every triangle, (nt, q, 2)."""
    return np.einsum("qk,tkd->tqd", lam, mesh.vertices[mesh.triangles])


@dataclass(frozen=True)
class DofMap:
    n_vertices: int
    n_edges: int
    node_coords: np.ndarray     # (n_nodes, 2): vertices then edge midpoints
    element_nodes: np.ndarray   # (nt, 6) P2 node indices per triangle

    @property
    def n_nodes(self):
        return self.n_vertices + self.n_edges

    @property
    def n_velocity(self):
        return 2 * self.n_nodes

    @property
    def n_pressure(self):
        return self.n_vertices

    @property
    def n_total(self):
        return self.n_velocity + self.n_pressure

    def velocity_dof(self, component, node):
        return component * self.n_nodes + np.asarray(node)

    def pressure_dof(self, vertex):
        return self.n_velocity + np.asarray(vertex)

    @property
    def velocity_dofs(self):
        return np.arange(self.n_velocity).reshape(2, self.n_nodes)

    @property
    def pressure_dofs(self):
        return np.arange(self.n_velocity, self.n_total)


def build_dofmap(mesh: TriMesh) -> DofMap:
    coords = np.vstack([mesh.vertices, mesh.edge_midpoints()])
    nodes = np.hstack([mesh.triangles, mesh.n_vertices + mesh.triangle_edges])
    return DofMap(mesh.n_vertices, mesh.n_edges, coords, nodes)


@dataclass
class StokesSystem:
    """Reduced Taylor-Hood saddle-point system ``K x = rhs``."""

    K: sp.csr_matrix
    rhs: np.ndarray
    dof_map: DofMap
    mesh: TriMesh
    free: np.ndarray              # full-space indices of the unknowns, ascending
    eliminated: np.ndarray        # full-space indices of Dirichlet DoFs
    dirichlet_values: np.ndarray  # values on ``eliminated``
    n_velocity: int
    n_pressure: int

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def n_component(self):
        """Unknowns per velocity component."""
        return self.n_velocity // 2

    @property
    def A(self):
        return self.K[:self.n_velocity, :self.n_velocity]

    @property
    def B(self):
        return self.K[self.n_velocity:, :self.n_velocity]

    @property
    def BT(self):
        return self.K[:self.n_velocity, self.n_velocity:]

    @property
    def A_component(self):
        """Scalar Laplacian acting on one velocity component."""
        m = self.n_component
        return self.K[:m, :m]

    @property
    def is_pressure(self):
        mask = np.zeros(self.n, dtype=bool)
        mask[self.n_velocity:] = True
        return mask

    @cached_property
    def free_nodes(self):
        """P2 node indices carrying the free velocity unknowns (one component)."""
        return self.free[:self.n_component]

    def expand(self, x):
        """Full-space vector with Dirichlet values filled in."""
        full = np.zeros(self.dof_map.n_total)
        full[self.free] = x
        full[self.eliminated] = self.dirichlet_values
        return full

    def split(self, x):
        """Nodal velocity (n_nodes, 2) and vertex pressure for a reduced vector."""
        full = self.expand(x)
        nn = self.dof_map.n_nodes
        u = np.column_stack([full[:nn], full[nn:2 * nn]])
        return u, full[2 * nn:]

    def divergence(self, x):
        """Discrete divergence ``B u`` of the full velocity, lifting included.

        The continuity rows carry only the lifting ``-B_D g_D``, so this is
        ``B u_free - rhs_p``.
        """
        nv = self.n_velocity
        return self.B @ x[:nv] - self.rhs[nv:]

    def solve_direct(self):
        return spla.splu(self.K.tocsc()).solve(self.rhs)

    def export(self, directory, name="stokes"):
        """Write ``K``, ``rhs`` as Matrix Market plus a JSON sidecar."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix_market(directory / f"{name}_K.mtx", self.K, symmetric=True)
        write_matrix_market(directory / f"{name}_rhs.mtx",
                            sp.csr_matrix(self.rhs.reshape(-1, 1)))
        tags = {}
        for e, t in zip(self.mesh.boundary_edges, self.mesh.boundary_tags):
            tags.setdefault(str(t), []).append(self.mesh.edges[e].tolist())
        meta = {
            "n": int(self.n),
            "n_velocity": int(self.n_velocity),
            "n_pressure": int(self.n_pressure),
            "block_offsets": {"velocity_x": 0, "velocity_y": int(self.n_component),
                              "pressure": int(self.n_velocity), "end": int(self.n)},
            "n_vertices": int(self.mesh.n_vertices),
            "n_edges": int(self.mesh.n_edges),
            "n_triangles": int(self.mesh.n_triangles),
            "full_dofs": int(self.dof_map.n_total),
            "n_eliminated": int(len(self.eliminated)),
            "boundary_edges": tags,
        }
        (directory / f"{name}.json").write_text(json.dumps(meta, indent=2))
        return meta


# -- boundary data ----------------------------------------------------------------

def lid_velocity(points):
    """Regularized lid: ``u_x = 16 x^2 (1-x)^2`` on ``y = 1``, zero elsewhere."""
    x, y = points[:, 0], points[:, 1]
    out = np.zeros_like(points)
    top = np.isclose(y, 1.0)
    out[top, 0] = 16 * x[top] ** 2 * (1 - x[top]) ** 2
    return out


class ManufacturedSolution:
    """Smooth divergence-free Stokes solution on the unit square.

    ``u = (sin(pi x) sin(pi y), cos(pi x) cos(pi y))``,
    ``p = sin(pi x) cos(pi y)``; forcing and Neumann data follow from
    ``-lap u + grad p = f`` and ``du/dn - p n = g_N``.
    """

    def velocity(self, pts):
        x, y = pts[..., 0], pts[..., 1]
        s, c = np.sin, np.cos
        return np.stack([s(np.pi * x) * s(np.pi * y), c(np.pi * x) * c(np.pi * y)], axis=-1)

    def pressure(self, pts):
        x, y = pts[..., 0], pts[..., 1]
        return np.sin(np.pi * x) * np.cos(np.pi * y)

    def velocity_gradient(self, pts):
        x, y = pts[..., 0], pts[..., 1]
        s, c, pi = np.sin, np.cos, np.pi
        g = np.empty(pts.shape[:-1] + (2, 2))
        g[..., 0, 0] = pi * c(pi * x) * s(pi * y)
        g[..., 0, 1] = pi * s(pi * x) * c(pi * y)
        g[..., 1, 0] = -pi * s(pi * x) * c(pi * y)
        g[..., 1, 1] = -pi * c(pi * x) * s(pi * y)
        return g

    def forcing(self, pts):
        x, y = pts[..., 0], pts[..., 1]
        pi = np.pi
        grad_p = np.stack([pi * np.cos(pi * x) * np.cos(pi * y),
                           -pi * np.sin(pi * x) * np.sin(pi * y)], axis=-1)
        return 2 * pi ** 2 * self.velocity(pts) + grad_p

    def neumann(self, pts, normals):
        g = self.velocity_gradient(pts)
        return np.einsum("...ij,...j->...i", g, normals) - self.pressure(pts)[..., None] * normals


# -- assembly -----------------------------------------------------------------------

def _element_matrices(mesh: TriMesh):
    glam, area = barycentric_gradients(mesh)
    dlam = p2_barycentric_derivatives(QUAD_POINTS)          # (q, 6, 3)
    dphi = np.einsum("qik,tkd->tqid", dlam, glam)            # (nt, q, 6, 2)
    wa = area[:, None] * QUAD_WEIGHTS[None, :]               # (nt, q)
    Ke = np.einsum("tq,tqid,tqjd->tij", wa, dphi, dphi)
    # b(p, v) = -int p div v ; P1 pressure basis = barycentric coordinates
    Be = -np.einsum("tq,qk,tqic->tcki", wa, QUAD_POINTS, dphi)   # (nt, 2, 3, 6)
    return Ke, Be, wa


def _check_boundary(mesh: TriMesh):
    try:
        validate_mesh(mesh)
    except MeshError as exc:
        raise AssemblyError(f"inconsistent mesh or boundary tags: {exc}") from exc
    tags = set(map(str, mesh.boundary_tags))
    if DIRICHLET not in tags:
        raise AssemblyError("no Dirichlet segment: velocity is only determined up to "
                            "a constant; choose a bc_layout with Dirichlet walls")
    if NEUMANN not in tags:
        raise AssemblyError("no Neumann segment: pressure is only determined up to a "
                            "constant; choose a bc_layout with a Neumann segment")


def dirichlet_nodes(mesh: TriMesh):
    edges = mesh.tagged_edges(DIRICHLET)
    return np.unique(np.concatenate([mesh.edges[edges].ravel(), mesh.n_vertices + edges]))


def _neumann_load(mesh: TriMesh, g_N, n_nodes):
    F = np.zeros((2, n_nodes))
    edges = mesh.tagged_edges(NEUMANN)
    if g_N is None or len(edges) == 0:
        return F
    centroid = mesh.vertices.mean(axis=0)
    for e in edges:
        a, b = mesh.edges[e]
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        t = pb - pa
        length = np.hypot(*t)
        normal = np.array([t[1], -t[0]]) / length
        if np.dot(normal, 0.5 * (pa + pb) - centroid) < 0:
            normal = -normal
        s = EDGE_POINTS
        pts = pa[None, :] + s[:, None] * t[None, :]
        phi = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
        g = g_N(pts, np.broadcast_to(normal, pts.shape))
        contrib = length * np.einsum("q,qc,qi->ci", EDGE_WEIGHTS, g, phi)
        F[:, [a, b, mesh.n_vertices + e]] += contrib
    return F


def assemble_full(mesh: TriMesh, f=None, g_N=None):
    """Unreduced Taylor-Hood matrix and load vector (no boundary elimination)."""
    dm = build_dofmap(mesh)
    Ke, Be, wa = _element_matrices(mesh)
    nodes = dm.element_nodes
    nn, nv = dm.n_nodes, dm.n_vertices

    rows = np.repeat(nodes, 6, axis=1).ravel()
    cols = np.tile(nodes, (1, 6)).ravel()
    A_s = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(nn, nn)).tocsr()
    A_s = 0.5 * (A_s + A_s.T)

    tri = mesh.triangles
    prow = np.repeat(tri, 6, axis=1).ravel()
    pcol = np.tile(nodes, (1, 3)).ravel()
    Bx = sp.coo_matrix((Be[:, 0].ravel(), (prow, pcol)), shape=(nv, nn))
    By = sp.coo_matrix((Be[:, 1].ravel(), (prow, pcol)), shape=(nv, nn))
    B = sp.hstack([Bx, By]).tocsr()
    A = sp.block_diag([A_s, A_s])
    K = sp.bmat([[A, B.T], [B, None]], format="csr")
    K = _drop_roundoff(K)

    F = np.zeros(dm.n_total)
    if f is not None:
        pts = quadrature_points(mesh)
        fq = f(pts)                                               # (nt, q, 2)
        phi = p2_values(QUAD_POINTS)                              # (q, 6)
        Fe = np.einsum("tq,tqc,qi->tci", wa, fq, phi)
        for c in range(2):
            F[c * nn:(c + 1) * nn] += np.bincount(nodes.ravel(), Fe[:, c].ravel(), minlength=nn)
    FN = _neumann_load(mesh, g_N, nn)
    F[:2 * nn] += FN.ravel()
    return K, F, dm


def _drop_roundoff(K, rel=1e-13):
    """Zero out cancellation residue of exactly-zero integrals.

    The entries stay stored: the sparsity pattern is the element
    connectivity, which is what algebraic Vanka patches are built from.
    """
    K = as_csr(K)
    thresh = rel * np.abs(K.data).max()
    K.data[np.abs(K.data) <= thresh] = 0.0
    return K


def assemble_stokes(mesh: TriMesh, g_D=lid_velocity, f=None, g_N=None) -> StokesSystem:
    """Assemble the reduced Stokes system.

    Parameters
    ----------
    mesh : TriMesh
    g_D : callable, optional
        Boundary velocity ``g_D(points) -> (m, 2)``; defaults to a regularized
        lid on the top edge.  ``None`` means homogeneous data.
    f : callable, optional
        Body force ``f(points) -> (..., 2)``.
    g_N : callable, optional
        Neumann traction ``g_N(points, outward_normals) -> (m, 2)``.
    """
    _check_boundary(mesh)
    K_full, F, dm = assemble_full(mesh, f=f, g_N=g_N)
    nn = dm.n_nodes

    dnodes = dirichlet_nodes(mesh)
    eliminated = np.concatenate([dnodes, nn + dnodes])
    values = np.zeros(len(eliminated))
    if g_D is not None:
        gd = g_D(dm.node_coords[dnodes])
        values = np.concatenate([gd[:, 0], gd[:, 1]])
    mask = np.ones(dm.n_total, dtype=bool)
    mask[eliminated] = False
    free = np.flatnonzero(mask)

    K_fd = K_full[free][:, eliminated]
    rhs = F[free] - K_fd @ values
    K = as_csr(K_full[free][:, free])
    n_vel = int(np.count_nonzero(free < 2 * nn))
    return StokesSystem(K, rhs, dm, mesh, free, eliminated, values,
                        n_velocity=n_vel, n_pressure=dm.n_pressure)


def manufactured_system(mesh: TriMesh, solution=None) -> StokesSystem:
    sol = solution or ManufacturedSolution()
    return assemble_stokes(mesh, g_D=sol.velocity, f=sol.forcing, g_N=sol.neumann)


def assemble_pressure_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    """P1 stiffness matrix on the mesh vertices with natural boundary conditions."""
    validate_mesh(mesh)
    glam, area = barycentric_gradients(mesh)
    Ke = area[:, None, None] * np.einsum("tkd,tmd->tkm", glam, glam)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    nv = mesh.n_vertices
    Ap = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    return _drop_roundoff(0.5 * (Ap + Ap.T))


def discretization_error(system: StokesSystem, exact_u, exact_p, x=None):
    """L2 errors ``(|u - u_h|, |p - p_h|)`` of a discrete solution.

    ``x`` defaults to the direct solution of the reduced system.
    """
    if x is None:
        try:
            x = system.solve_direct()
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"reduced Stokes matrix is singular: {exc}") from exc
    mesh = system.mesh
    u, p = system.split(x)
    dm = system.dof_map
    _, area = barycentric_gradients(mesh)
    pts = quadrature_points(mesh)
    wa = area[:, None] * QUAD_WEIGHTS[None, :]
    phi = p2_values(QUAD_POINTS)
    uh = np.einsum("qi,tic->tqc", phi, u[dm.element_nodes])
    ph = np.einsum("qk,tk->tq", QUAD_POINTS, p[mesh.triangles])
    eu = np.sum(wa * np.sum((uh - exact_u(pts)) ** 2, axis=-1))
    ep = np.sum(wa * (ph - exact_p(pts)) ** 2)
    return float(np.sqrt(eu)), float(np.sqrt(ep))
