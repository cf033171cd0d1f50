"""Iteration counts of SA-AMG with additive Vanka over the damping grid.

Writes ``results/demos/sweep.csv`` and ``sweep.svg``.  Non-converged points
are shown as ``100*`` together with their final residual.
"""
from amglab.experiments import ExperimentConfig, run_omega_sweep

config = ExperimentConfig(mesh_n=[11, 14], output_dir="results/demos/sweep")
result = run_omega_sweep(config)
print(f"{'cycle':8s} {'omega':>5s} {'DoFs':>6s} {'iters':>6s} {'residual':>10s}")
for r in result.rows:
    print(f"{r.cycle:8s} {r.omega:5.2f} {r.dofs:6d} {r.display:>6s} {r.final_residual:10.2e}")
print(f"wrote {result.csv_path} and {result.svg_path}")
