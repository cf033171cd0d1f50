"""Monolithic smoothed-aggregation AMG with Vanka relaxation for Taylor-Hood Stokes.

Layers, bottom up: `sparse` (CSR/dense substrate), `mesh` and `stokes`
(discretization), `aggregation` (SA hierarchy), `vanka` (relaxation),
`solver` (cycles, FGMRES), `theory` (optimal two-grid analysis) and
`experiments` (configuration-driven studies behind the ``amglab`` command).
"""

__version__ = "0.1.0"

from .aggregation import SAParams, build_monolithic_hierarchy
from .mesh import BCLayout, TriMesh, build_structured_mesh
from .solver import CycleConfig, cycle, fgmres, relaxation_solve, stationary_solve
from .sparse import DenseLU, SingularMatrixError, dense_eig, dense_solve, spectral_radius
from .stokes import (StokesSystem, assemble_pressure_laplacian, assemble_stokes,
                     manufactured_system)
from .theory import (pencil_eigendecomposition, optimal_operators, predicted_factor,
                     verify_identity)
from .vanka import VankaMode, VankaRelaxation, extract_m_inverse

__all__ = [
    "BCLayout", "CycleConfig", "DenseLU", "SAParams", "SingularMatrixError", "StokesSystem",
    "TriMesh", "VankaMode", "VankaRelaxation", "assemble_pressure_laplacian",
    "assemble_stokes", "build_monolithic_hierarchy", "build_structured_mesh", "cycle",
    "dense_eig", "dense_solve", "extract_m_inverse", "fgmres", "manufactured_system",
    "optimal_operators", "pencil_eigendecomposition", "predicted_factor",
    "relaxation_solve", "spectral_radius", "stationary_solve", "verify_identity",
]
