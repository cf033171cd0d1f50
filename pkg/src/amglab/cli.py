"""``amglab`` command line: sweep | spectrum | theory | vanka-compare | export-system."""
from __future__ import annotations

import argparse
import math
import sys

from .experiments import (ConfigError, ExperimentConfig, export_system, run_omega_sweep,
                          run_spectrum, run_theory_comparison, run_vanka_comparison)


def _common(p):
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--mesh-n", type=int, action="append", dest="mesh_n",
                   help="cells per side (repeatable)")
    p.add_argument("--omega", type=float, action="append", dest="omegas",
                   help="damping parameter (repeatable)")
    p.add_argument("--vanka-mode", dest="vanka_mode",
                   choices=["additive_pou", "additive_unweighted", "multiplicative",
                            "multiplicative_symmetrized"])
    p.add_argument("--bc-layout", dest="bc_layout")
    p.add_argument("--tol", type=float)
    p.add_argument("--maxit", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--output-dir", "-o", dest="output_dir", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="amglab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="iteration counts over cycles and omegas")
    _common(p)
    p.add_argument("--cycle", action="append", dest="cycles", help='e.g. "V(1,0)" (repeatable)')

    p = sub.add_parser("spectrum", help="pencil spectrum per omega")
    _common(p)

    p = sub.add_parser("theory", help="predicted vs measured two-grid factors")
    _common(p)
    p.add_argument("--nc", type=float, action="append", dest="n_c_list",
                   help="coarse size, or fraction of n when below 1 (repeatable)")

    p = sub.add_parser("vanka-compare", help="standalone additive vs multiplicative Vanka")
    _common(p)
    p.add_argument("--mode", action="append", dest="compare_modes",
                   help="relaxation mode per slot (repeatable)")
    p.add_argument("--compare-omega", type=float, dest="compare_omega")

    p = sub.add_parser("export-system", help="write the system and hierarchy to disk")
    _common(p)
    p.add_argument("--format", default="matrix-market", choices=["matrix-market", "csv"])
    return parser


OVERRIDE_KEYS = ("mesh_n", "omegas", "vanka_mode", "bc_layout", "tol", "maxit", "seed",
                 "levels", "output_dir", "cycles", "n_c_list", "compare_modes", "compare_omega")


def config_from_args(args, default_output):
    overrides = {k: getattr(args, k, None) for k in OVERRIDE_KEYS}
    if overrides["output_dir"] is None:
        overrides["output_dir"] = default_output
    if args.config:
        return ExperimentConfig.load(args.config, **overrides)
    return ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def _f(v, fmt=".4f"):
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, fmt)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args, f"results/{args.command}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"amglab: invalid configuration: {exc}", file=sys.stderr)
        return 2

    if args.command == "sweep":
        res = run_omega_sweep(config)
        print(f"{'cycle':8s} {'omega':>6s} {'DoFs':>6s} {'iters':>6s} {'residual':>10s}  status")
        for r in res.rows:
            print(f"{r.cycle:8s} {r.omega:6.2f} {r.dofs:6d} {r.display:>6s} "
                  f"{r.final_residual:10.2e}  {r.status}")
        print(f"wrote {res.csv_path}")
    elif args.command == "spectrum":
        res = run_spectrum(config)
        for w, lam in res.spectra.items():
            if lam is None:
                print(f"omega={w:g}: {res.status[w]}")
                continue
            nonreal = int((abs(lam.imag) > 1e-10).sum())
            print(f"omega={w:g}: {len(lam)} eigenvalues, {nonreal} non-real, "
                  f"max |1-lambda| = {abs(1 - lam).max():.4f}")
        print(f"wrote {res.csv_path}")
    elif args.command == "theory":
        rows = run_theory_comparison(config)
        for r in rows:
            extra = " ".join(f"nc={k}:{_f(v)}" for k, v in r.predicted_nc.items())
            print(f"omega={r.omega:.2f} n={r.dofs} n_c_sa={r.n_c_sa} "
                  f"predicted={_f(r.predicted_sa)} rho={_f(r.rho_sa)} "
                  f"geometric={_f(r.geometric)} asymptotic={_f(r.asymptotic)} {extra} "
                  f"[{r.status}]")
        print(f"wrote {config.output_dir}/theory.csv")
    elif args.command == "vanka-compare":
        res = run_vanka_comparison(config)
        for label, log in res.histories.items():
            rel = log.residual_norms[-1] / log.residual_norms[0]
            state = "converged" if log.converged else "not converged"
            print(f"{label}: {log.iterations} sweeps, relative residual {rel:.2e} ({state})")
        print(f"wrote {res.csv_path}")
    elif args.command == "export-system":
        for p in export_system(config, args.format):
            print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
