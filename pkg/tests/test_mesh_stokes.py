import json
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amglab.mesh import (DIRICHLET, NEUMANN, BCLayout, MeshError, build_structured_mesh,
                         validate_mesh)
from amglab.stokes import (EDGE_POINTS, EDGE_WEIGHTS, QUAD_POINTS, QUAD_WEIGHTS,
                           AssemblyError, ManufacturedSolution, assemble_full,
                           assemble_pressure_laplacian, assemble_stokes, build_dofmap,
                           discretization_error, manufactured_system, p2_values,
                           quadrature_points)


def reduced_size(n):
    """Reduced DoF count for the three-walls layout, counted by hand.

    The Dirichlet set holds 3n+1 vertices and 3n edge midpoints.
    """
    nv, ne = (n + 1) ** 2, 3 * n * n + 2 * n
    return 2 * (nv + ne - (6 * n + 1)) + nv


# -- mesh ------------------------------------------------------------------------

@pytest.mark.parametrize("n, nv, nt, nb", [(1, 4, 2, 4), (2, 9, 8, 8), (5, 36, 50, 20)])
def test_structured_mesh_counts(n, nv, nt, nb):
    m = build_structured_mesh(n)
    assert (m.n_vertices, m.n_triangles, len(m.boundary_edges)) == (nv, nt, nb)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 12), st.sampled_from(list(BCLayout)))
def test_mesh_invariants_property(n, layout):
    m = build_structured_mesh(n, layout)
    validate_mesh(m)
    np.testing.assert_allclose(m.signed_areas(), 1.0 / (2 * n * n), rtol=1e-12)
    counts = m.edge_triangle_counts()
    assert set(np.unique(counts)) <= {1, 2}
    assert np.all(counts[m.boundary_edges] == 1)
    assert m.n_edges == 3 * n * n + 2 * n
    assert np.isclose(m.signed_areas().sum(), 1.0)


def test_mesh_rejects_zero_cells():
    with pytest.raises(MeshError):
        build_structured_mesh(0)


def test_three_walls_tags():
    n = 4
    m = build_structured_mesh(n)
    mid = m.edge_midpoints()[m.boundary_edges]
    right = np.isclose(mid[:, 0], 1.0)
    assert np.all(m.boundary_tags[right] == NEUMANN)
    assert np.all(m.boundary_tags[~right] == DIRICHLET)
    assert right.sum() == n


def test_validate_mesh_catches_flipped_triangle():
    m = build_structured_mesh(2)
    m.triangles[0] = m.triangles[0][::-1]
    with pytest.raises(MeshError):
        validate_mesh(m)


# -- quadrature and basis ----------------------------------------------------------

def test_quadrature_weights_sum_to_one():
    assert QUAD_WEIGHTS.sum() == pytest.approx(1.0, abs=1e-15)
    assert EDGE_WEIGHTS.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("a, b", [(a, b) for a in range(6) for b in range(6) if a + b <= 5])
def test_triangle_rule_exact_for_degree_five(a, b):
    # int_T x^a y^b over the reference triangle = a! b! / (a + b + 2)!
    x, y = QUAD_POINTS[:, 1], QUAD_POINTS[:, 2]
    approx = 0.5 * np.sum(QUAD_WEIGHTS * x ** a * y ** b)
    exact = factorial(a) * factorial(b) / factorial(a + b + 2)
    assert approx == pytest.approx(exact, rel=1e-13)


@pytest.mark.parametrize("k", range(6))
def test_edge_rule_exact_for_degree_five(k):
    assert np.sum(EDGE_WEIGHTS * EDGE_POINTS ** k) == pytest.approx(1 / (k + 1), rel=1e-14)


def test_p2_basis_is_nodal_and_partitions_unity():
    nodes = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1],
                      [0, .5, .5], [.5, 0, .5], [.5, .5, 0]])
    np.testing.assert_allclose(p2_values(nodes), np.eye(6), atol=1e-15)
    lam = np.random.default_rng(0).dirichlet([1, 1, 1], size=20)
    np.testing.assert_allclose(p2_values(lam).sum(axis=1), 1.0, atol=1e-14)


# -- dof map and assembly --------------------------------------------------------

def test_dofmap_counts_and_bijection():
    m = build_structured_mesh(3)
    dm = build_dofmap(m)
    assert dm.n_velocity == 2 * (m.n_vertices + m.n_edges)
    assert dm.n_pressure == m.n_vertices
    allv = np.concatenate([dm.velocity_dofs.ravel(), dm.pressure_dofs])
    np.testing.assert_array_equal(np.sort(allv), np.arange(dm.n_total))
    np.testing.assert_allclose(dm.node_coords[m.n_vertices:], m.edge_midpoints())


def test_full_assembly_size_on_one_cell():
    K, F, dm = assemble_full(build_structured_mesh(1))
    assert K.shape == (22, 22)
    assert dm.n_total == 2 * (4 + 5) + 4


@pytest.mark.parametrize("n", [2, 4, 7])
def test_reduced_system_structure(n):
    s = assemble_stokes(build_structured_mesh(n))
    assert s.n == reduced_size(n)
    K = s.K
    assert abs(K - K.T).max() == 0.0
    assert np.all(K[s.n_velocity:, s.n_velocity:].toarray() == 0.0)
    assert len(s.eliminated) == 2 * (6 * n + 1)
    assert np.intersect1d(s.free, s.eliminated).size == 0


def test_reference_system_sizes():
    assert [reduced_size(n) for n in (6, 8, 11, 14)] == [313, 561, 1068, 1737]
    assert assemble_stokes(build_structured_mesh(11)).n == 1068


def _full_B(m):
    K, _, dm = assemble_full(m)
    return K[dm.n_velocity:, :dm.n_velocity].toarray(), dm


def test_constant_velocity_is_discretely_divergence_free():
    m = build_structured_mesh(4)
    B, dm = _full_B(m)
    u = np.concatenate([np.full(dm.n_nodes, 0.7), np.full(dm.n_nodes, -1.3)])
    interior = np.flatnonzero(np.all((m.vertices > 0) & (m.vertices < 1), axis=1))
    assert np.abs(B[interior] @ u).max() < 1e-14
    assert np.abs(B @ u).max() < 1e-14


def test_linear_velocity_divergence_matches_exact_integral():
    # u = (x, 0): div u = 1, so row i of B u is -int phi_i and the rows sum to -|Omega|
    m = build_structured_mesh(5)
    B, dm = _full_B(m)
    x = dm.node_coords[:, 0]
    u = np.concatenate([x, np.zeros(dm.n_nodes)])
    Bu = B @ u
    assert Bu.sum() == pytest.approx(-1.0, abs=1e-13)
    area = m.signed_areas()
    patch = np.bincount(m.triangles.ravel(), np.repeat(area, 3), minlength=m.n_vertices) / 3
    np.testing.assert_allclose(Bu, -patch, atol=1e-14)


def test_scalar_laplacian_energy_of_quadratic():
    m = build_structured_mesh(3)
    K, _, dm = assemble_full(m)
    nn = dm.n_nodes
    A = K[:nn, :nn].toarray()
    x, y = dm.node_coords.T
    q = x ** 2 + x * y
    # q lies in P2, so a(q, q) = int (2x + y)^2 + x^2 = 4/3 + 1 + 1/3 + 1/3 exactly
    assert q @ A @ q == pytest.approx(4 / 3 + 1.0 + 1 / 3 + 1 / 3, rel=1e-13)
    np.testing.assert_allclose(A.sum(axis=1), 0.0, atol=1e-13)


def test_boundary_layouts_without_neumann_or_dirichlet_are_rejected():
    with pytest.raises(AssemblyError, match="Neumann"):
        assemble_stokes(build_structured_mesh(2, BCLayout.ALL_DIRICHLET))
    with pytest.raises(AssemblyError, match="Dirichlet"):
        assemble_stokes(build_structured_mesh(2, BCLayout.ALL_NEUMANN))


def test_inconsistent_tags_are_rejected():
    m = build_structured_mesh(2)
    m.boundary_tags[0] = "slip"
    with pytest.raises(AssemblyError):
        assemble_stokes(m)


def test_channel_layout_assembles():
    s = manufactured_system(build_structured_mesh(4, BCLayout.CHANNEL))
    x = s.solve_direct()
    assert np.linalg.norm(s.K @ x - s.rhs) < 1e-10 * np.linalg.norm(s.rhs)


# -- manufactured solution -----------------------------------------------------------

def test_manufactured_forcing_against_finite_differences():
    sol = ManufacturedSolution()
    pts = np.random.default_rng(3).uniform(0.1, 0.9, size=(10, 2))
    h = 1e-4
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    lap = sum(sol.velocity(pts + e) - 2 * sol.velocity(pts) + sol.velocity(pts - e)
              for e in (ex, ey)) / h ** 2
    grad_p = np.column_stack([(sol.pressure(pts + e) - sol.pressure(pts - e)) / (2 * h)
                              for e in (ex, ey)])
    np.testing.assert_allclose(sol.forcing(pts), -lap + grad_p, atol=1e-5)
    div = sum((sol.velocity(pts + e)[:, k] - sol.velocity(pts - e)[:, k]) / (2 * h)
              for k, e in enumerate((ex, ey)))
    assert np.abs(div).max() < 1e-8


def test_manufactured_neumann_data():
    sol = ManufacturedSolution()
    pts = np.column_stack([np.ones(5), np.linspace(0, 1, 5)])
    normals = np.tile([1.0, 0.0], (5, 1))
    h = 1e-6
    du_dx = (sol.velocity(pts + [h, 0]) - sol.velocity(pts - [h, 0])) / (2 * h)
    expected = du_dx - sol.pressure(pts)[:, None] * normals
    np.testing.assert_allclose(sol.neumann(pts, normals), expected, atol=1e-8)


def test_discretization_error_decreases_with_h():
    sol = ManufacturedSolution()
    errs = [discretization_error(manufactured_system(build_structured_mesh(n)),
                                 sol.velocity, sol.pressure) for n in (2, 4, 8)]
    eu, ep = np.array(errs).T
    assert np.all(np.diff(eu) < 0) and np.all(np.diff(ep) < 0)


def test_discretization_error_of_interpolant_is_zero_for_exact_field():
    # nodal values of a field inside the discrete space carry no L2 error
    m = build_structured_mesh(3)
    s = assemble_stokes(m, g_D=lambda p: np.column_stack([p[:, 1], np.zeros(len(p))]))
    coords = s.dof_map.node_coords
    full = np.concatenate([coords[:, 1], np.zeros(len(coords)), np.zeros(m.n_vertices)])
    x = full[s.free]
    eu, ep = discretization_error(s, lambda p: np.stack([p[..., 1], 0 * p[..., 1]], -1),
                                  lambda p: 0 * p[..., 0], x=x)
    assert eu < 1e-14 and ep == 0.0


def test_divergence_of_direct_solution():
    s = manufactured_system(build_structured_mesh(6))
    x = s.solve_direct()
    assert np.linalg.norm(s.divergence(x)) < 1e-12
    u, p = s.split(x)
    assert u.shape == (s.dof_map.n_nodes, 2) and p.shape == (s.dof_map.n_vertices,)


def test_lid_driven_default_has_nonzero_rhs():
    s = assemble_stokes(build_structured_mesh(4))
    assert np.linalg.norm(s.rhs) > 0
    full = s.expand(np.zeros(s.n))
    coords = s.dof_map.node_coords
    top = np.isclose(coords[:, 1], 1.0)
    np.testing.assert_allclose(full[:s.dof_map.n_nodes][top],
                               16 * coords[top, 0] ** 2 * (1 - coords[top, 0]) ** 2)


def test_quadrature_points_lie_inside_triangles():
    m = build_structured_mesh(2)
    pts = quadrature_points(m)
    assert pts.shape == (m.n_triangles, len(QUAD_WEIGHTS), 2)
    assert np.all((pts > 0) & (pts < 1))


# -- pressure Laplacian ------------------------------------------------------------

def test_pressure_laplacian_properties():
    m = build_structured_mesh(5)
    Ap = assemble_pressure_laplacian(m).toarray()
    assert Ap.shape == (m.n_vertices, m.n_vertices)
    np.testing.assert_array_equal(Ap, Ap.T)
    np.testing.assert_allclose(Ap.sum(axis=1), 0.0, atol=1e-13)
    assert np.linalg.eigvalsh(Ap).min() > -1e-12
    x = m.vertices[:, 0] + 2 * m.vertices[:, 1]
    assert x @ Ap @ x == pytest.approx(5.0, rel=1e-13)


def test_pressure_laplacian_is_five_point_stencil_on_uniform_grid():
    n = 4
    m = build_structured_mesh(n)
    Ap = assemble_pressure_laplacian(m).toarray()
    interior = (n + 1) * 2 + 2
    row = Ap[interior]
    assert row[interior] == pytest.approx(4.0)
    nbrs = [interior - 1, interior + 1, interior - (n + 1), interior + (n + 1)]
    np.testing.assert_allclose(row[nbrs], -1.0)
    assert np.count_nonzero(np.abs(row) > 1e-14) == 5


# -- export --------------------------------------------------------------------------

def test_export_roundtrip(tmp_path):
    from amglab.sparse import read_matrix_market

    s = manufactured_system(build_structured_mesh(3))
    meta = s.export(tmp_path)
    K = read_matrix_market(tmp_path / "stokes_K.mtx")
    assert abs(K - s.K).max() == 0.0
    rhs = read_matrix_market(tmp_path / "stokes_rhs.mtx").toarray().ravel()
    np.testing.assert_array_equal(rhs, s.rhs)
    sidecar = json.loads((tmp_path / "stokes.json").read_text())
    assert sidecar == json.loads(json.dumps(meta))
    assert sidecar["block_offsets"]["pressure"] == s.n_velocity
    assert set(sidecar["boundary_edges"]) == {DIRICHLET, NEUMANN}
