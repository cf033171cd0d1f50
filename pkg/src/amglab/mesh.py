"""Structured triangular meshes of the unit square."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
SIDES = ("left", "bottom", "right", "top")


class MeshError(ValueError):
    pass


class BCLayout(str, enum.Enum):
    """Assignment of boundary condition types to the four sides of the square."""

    THREE_WALLS = "three_walls"      # Dirichlet left/bottom/top, Neumann right
    CHANNEL = "channel"              # Dirichlet bottom/top, Neumann left/right
    ALL_DIRICHLET = "all_dirichlet"  # pressure determined only up to a constant
    ALL_NEUMANN = "all_neumann"      # velocity determined only up to a constant

    def side_tags(self) -> dict:
        D, N = DIRICHLET, NEUMANN
        return {
            BCLayout.THREE_WALLS: dict(left=D, bottom=D, right=N, top=D),
            BCLayout.CHANNEL: dict(left=N, bottom=D, right=N, top=D),
            BCLayout.ALL_DIRICHLET: dict(left=D, bottom=D, right=D, top=D),
            BCLayout.ALL_NEUMANN: dict(left=N, bottom=N, right=N, top=N),
        }[self]


@dataclass
class TriMesh:
    """Counterclockwise triangulation with tagged boundary edges.

    ``edges`` lists every edge once as a sorted vertex pair and
    ``triangle_edges[t, k]`` is the edge opposite local vertex ``k`` of
    triangle ``t``.  ``boundary_edges`` holds indices into ``edges``.
    """

    vertices: np.ndarray         # (nv, 2)
    triangles: np.ndarray        # (nt, 3)
    boundary_edges: np.ndarray   # (nb,) edge indices
    boundary_tags: np.ndarray    # (nb,) DIRICHLET / NEUMANN
    edges: np.ndarray = field(default=None)
    triangle_edges: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.edges is None:
            self.edges, self.triangle_edges = build_edges(self.triangles)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_midpoints(self):
        return self.vertices[self.edges].mean(axis=1)

    def edge_triangle_counts(self):
        return np.bincount(self.triangle_edges.ravel(), minlength=self.n_edges)

    def tagged_edges(self, tag):
        return self.boundary_edges[self.boundary_tags == tag]


def build_edges(triangles):
    """Unique edges of a triangulation and the triangle-to-edge map."""
    tri = np.asarray(triangles)
    local = np.stack([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=1)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def build_structured_mesh(n, bc_layout=BCLayout.THREE_WALLS) -> TriMesh:
    """Uniform ``n x n`` grid of the unit square, each cell split along its
    lower-left to upper-right diagonal."""
    if n < 1:
        raise MeshError("build_structured_mesh needs at least one cell per side")
    bc_layout = BCLayout(bc_layout)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v0 = (j * (n + 1) + i).ravel()
    v1, v2, v3 = v0 + 1, v0 + n + 2, v0 + n + 1
    triangles = np.concatenate([np.column_stack([v0, v1, v2]),
                                np.column_stack([v0, v2, v3])])
    edges, tri_edges = build_edges(triangles)

    counts = np.bincount(tri_edges.ravel(), minlength=len(edges))
    bnd = np.flatnonzero(counts == 1)
    mid = vertices[edges[bnd]].mean(axis=1)
    tags = bc_layout.side_tags()
    eps = 0.25 / n
    side = np.empty(len(bnd), dtype=object)
    side[mid[:, 0] < eps] = "left"
    side[mid[:, 0] > 1 - eps] = "right"
    side[mid[:, 1] < eps] = "bottom"
    side[mid[:, 1] > 1 - eps] = "top"
    btags = np.array([tags[s_] for s_ in side])
    return TriMesh(vertices, triangles, bnd, btags, edges, tri_edges)


def boundary_side(mesh: TriMesh, edge_index) -> str:
    x, y = mesh.vertices[mesh.edges[edge_index]].mean(axis=0)
    return min(zip([x, y, 1 - x, 1 - y], SIDES))[1]


def validate_mesh(mesh: TriMesh) -> None:
    """Raise `MeshError` unless orientation, edge incidence and tags are sane."""
    if np.any(mesh.signed_areas() <= 0):
        raise MeshError("mesh has triangles with non-positive signed area")
    counts = mesh.edge_triangle_counts()
    if np.any((counts < 1) | (counts > 2)):
        raise MeshError("every edge must belong to one or two triangles")
    bnd = np.flatnonzero(counts == 1)
    tagged = np.asarray(mesh.boundary_edges)
    if len(np.unique(tagged)) != len(tagged):
        raise MeshError("boundary edge tagged twice")
    if set(tagged.tolist()) != set(bnd.tolist()):
        raise MeshError("boundary tags do not match the boundary edges of the mesh")
    if not set(np.unique(mesh.boundary_tags)) <= {DIRICHLET, NEUMANN}:
        raise MeshError(f"unknown boundary tags {set(mesh.boundary_tags)}")
