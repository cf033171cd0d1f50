"""Optimal interpolation from the pencil (K, M) and the two-grid identity.

The ideal coarse space spans the n_c generalized eigenvectors with eigenvalues
farthest from 1.  The two-grid factor is then exactly |1 - lambda_(n_c+1)|.
The same prediction at the SA coarse size bounds what SA-AMG achieves.
"""
from amglab import (VankaRelaxation, build_structured_mesh, extract_m_inverse,
                    manufactured_system, pencil_eigendecomposition, verify_identity)
from amglab.experiments import ExperimentConfig, run_theory_comparison

system = manufactured_system(build_structured_mesh(6))
relax = VankaRelaxation(system.K, system.n_velocity, "additive_pou")
M_inv = 0.62 * extract_m_inverse(relax)
decomp = pencil_eigendecomposition(system.K, M_inv)
print(f"n = {system.n}, eigenvector condition {decomp.condition:.1e}, "
      f"biorthogonality defect {decomp.biorth_defect:.1e}")
for n_c in (system.n // 8, system.n // 4, system.n // 2):
    rep = verify_identity(system.K, M_inv, n_c, decomp=decomp, omega=0.62)
    print(f"n_c = {n_c:3d} (effective {rep.n_c_eff:3d}): predicted {rep.predicted:.6f}, "
          f"measured {rep.measured:.6f}, gap {rep.gap:.1e}")

# SA-AMG against the prediction on the larger default mesh (takes about half a minute).
rows = run_theory_comparison(ExperimentConfig(mesh_n=[11], maxit=300,
                                              output_dir="results/demos/theory"))
print("omega  predicted  geometric  asymptotic  (SA coarse size "
      f"{rows[0].n_c_sa})")
for r in rows:
    print(f"{r.omega:5.2f}  {r.predicted_sa:9.4f}  {r.geometric:9.4f}  {r.asymptotic:10.4f}")
