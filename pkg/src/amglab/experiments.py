"""Configuration-driven experiments: omega sweeps, spectra, theory comparison, Vanka comparison.

Every runner returns its rows and, when ``config.output_dir`` is set,
writes a CSV table (header row, ``repr`` floats, no timestamps, so equal
configurations give byte-identical files), an SVG plot and a JSON manifest.
"""
from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .aggregation import AggregationError, SAParams, build_monolithic_hierarchy
from .mesh import BCLayout, build_structured_mesh
from .solver import CycleConfig, convergence_factors, relaxation_solve, stationary_solve
from .sparse import EigenSolverError, SingularMatrixError, read_matrix_market, write_dense_csv
from .stokes import assemble_pressure_laplacian, assemble_stokes, manufactured_system
from .svg import Figure
from .theory import (TheoryError, assemble_error_propagator, order_by_distance_from_one,
                     pencil_eigendecomposition, predicted_factor, spectral_radius_dense)
from .vanka import VankaError, VankaMode, VankaRelaxation, extract_m_inverse

OMEGA_GRID = (0.30, 0.41, 0.52, 0.62, 0.73, 0.84)
CYCLES = ("V(1,0)", "V(2,0)", "V(2,2)", "V(4,0)")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Parameters shared by all runners.

    ``mesh_n`` lists the cells per side of each mesh; single-mesh runners use
    the first entry.  ``n_c_list`` entries below 1 are fractions of ``n``.
    """

    mesh_n: list = field(default_factory=lambda: [11])
    bc_layout: str = BCLayout.THREE_WALLS.value
    omegas: list = field(default_factory=lambda: list(OMEGA_GRID))
    cycles: list = field(default_factory=lambda: list(CYCLES))
    vanka_mode: str = VankaMode.ADDITIVE_POU.value
    n_c_list: list = field(default_factory=lambda: [0.125, 0.25, 0.5])
    tol: float = 1e-10
    maxit: int = 100
    seed: int = 0
    output_dir: str = None
    levels: int = 2
    rhs: str = "manufactured"                  # or "lid"
    relative_tol: bool = True
    compare_modes: list = field(default_factory=lambda: ["additive_pou", "multiplicative"])
    compare_omega: float = 0.62
    compare_maxit: int = 5000
    sa_k: int = 2
    sa_theta: float = 4.0

    def __post_init__(self):
        if isinstance(self.mesh_n, (int, np.integer)):
            self.mesh_n = [int(self.mesh_n)]
        self.mesh_n = [int(n) for n in self.mesh_n]
        self.omegas = [float(w) for w in np.atleast_1d(self.omegas)]
        self.cycles = [c if isinstance(c, str) else f"V({c[0]},{c[1]})" for c in self.cycles]
        self.validate()

    def validate(self):
        if not self.mesh_n or min(self.mesh_n) < 1:
            raise ConfigError("mesh_n must list positive cell counts")
        if not self.omegas:
            raise ConfigError("omegas must be nonempty")
        if any(not w > 0 for w in self.omegas):
            raise ConfigError("omegas must be positive")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.maxit < 1 or self.compare_maxit < 1:
            raise ConfigError("maxit must be at least 1")
        if self.rhs not in ("manufactured", "lid"):
            raise ConfigError(f"unknown rhs {self.rhs!r}")
        BCLayout(self.bc_layout)
        VankaMode(self.vanka_mode)
        for m in self.compare_modes:
            VankaMode(m)
        for c in self.cycles:
            CycleConfig.parse(c)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, **overrides):
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def with_overrides(self, **overrides):
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self):
        return asdict(self)

    @property
    def sa_params(self):
        return SAParams(k=self.sa_k, theta=self.sa_theta)

    def cycle_config(self, label, omega):
        return CycleConfig.parse(label, omega=omega, levels=self.levels)


@dataclass
class ReportRow:
    cycle: str
    omega: float
    mesh_n: int
    dofs: int
    mode: str
    rhs: str
    iterations: int
    converged: bool
    display: str                 # iterations, or "<maxit>*" when not converged
    final_residual: float
    relative_residual: float
    geometric: float
    asymptotic: float
    predicted: float = float("nan")
    status: str = "ok"

    FIELDS = ("cycle", "omega", "mesh_n", "dofs", "mode", "rhs", "iterations", "converged",
              "display", "final_residual", "relative_residual", "geometric", "asymptotic",
              "predicted", "status")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def write_manifest(path, command, config, outputs, started, extra=None):
    manifest = {
        "command": command,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "seed": config.seed,
        "config": config.to_dict(),
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, default=str), encoding="utf-8")
    return manifest


def _now():
    return datetime.now(timezone.utc).isoformat()


def _output_dir(config):
    if config.output_dir is None:
        return None
    d = Path(config.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- problem setup ---------------------------------------------------------------

@dataclass
class Problem:
    """System, hierarchy and base smoother for one mesh (shared by sweep points)."""

    mesh_n: int
    system: object
    hierarchy: list
    relax: VankaRelaxation

    def smoother(self, mode, omega):
        return self.relax.with_mode(mode, omega)


def build_problem(config: ExperimentConfig, mesh_n=None) -> Problem:
    n = config.mesh_n[0] if mesh_n is None else int(mesh_n)
    mesh = build_structured_mesh(n, BCLayout(config.bc_layout))
    system = manufactured_system(mesh) if config.rhs == "manufactured" else assemble_stokes(mesh)
    A_p = assemble_pressure_laplacian(mesh)
    hierarchy = build_monolithic_hierarchy(system, A_p, config.levels, config.sa_params)
    relax = VankaRelaxation(system.K, system.n_velocity, config.vanka_mode, 1.0)
    return Problem(n, system, hierarchy, relax)


def _level_smoothers(problem, mode, omega):
    out = [problem.smoother(mode, omega)]
    for L in problem.hierarchy[1:-1]:
        out.append(VankaRelaxation(L.K, L.n_velocity, mode, omega))
    return out


def damped_m_inverse(relax: VankaRelaxation, omega):
    """Dense ``omega M^-1`` (additive) or the damped sweep operator (multiplicative)."""
    r = relax.with_mode(relax.mode, omega)
    return extract_m_inverse(r, include_damping=True)


def _factors(log):
    try:
        return convergence_factors(log)
    except ValueError:
        return float("nan"), float("nan")


# -- iteration-count sweep ----------------------------------------------------------

@dataclass
class SweepResult:
    rows: list
    csv_path: Path = None
    svg_path: Path = None


def run_omega_sweep(config: ExperimentConfig, problems=None) -> SweepResult:
    """Stationary SA-AMG solves for every (mesh, cycle, omega).

    Non-converged points are reported with ``display = "<maxit>*"`` and their
    final residual; setup or solver failures become rows with a status flag.
    """
    started = _now()
    rows = []
    problems = problems or {}
    for n in config.mesh_n:
        try:
            problem = problems.get(n) or build_problem(config, n)
        except (AggregationError, VankaError, SingularMatrixError, ValueError) as exc:
            for label in config.cycles:
                for w in config.omegas:
                    rows.append(ReportRow(label, w, n, -1, config.vanka_mode, config.rhs, 0,
                                          False, "-", math.nan, math.nan, math.nan, math.nan,
                                          status=f"setup failed: {exc}"))
            continue
        b = problem.system.rhs
        for label in config.cycles:
            for w in config.omegas:
                cfg = config.cycle_config(label, w)
                try:
                    relax = _level_smoothers(problem, config.vanka_mode, w)
                    log = stationary_solve(problem.hierarchy, relax, b, cfg, tol=config.tol,
                                           maxit=config.maxit, relative=config.relative_tol)
                    status = "ok" if log.converged else (
                        "diverged" if not math.isfinite(log.residual_norms[-1]) else "maxit")
                except (np.linalg.LinAlgError, VankaError, ValueError) as exc:
                    rows.append(ReportRow(cfg.label, w, n, problem.system.n, config.vanka_mode,
                                          config.rhs, 0, False, "-", math.nan, math.nan,
                                          math.nan, math.nan, status=f"error: {exc}"))
                    continue
                r = log.residual_norms
                geo, asy = _factors(log)
                display = str(log.iterations) if log.converged else f"{config.maxit}*"
                rows.append(ReportRow(cfg.label, w, n, problem.system.n, config.vanka_mode,
                                      config.rhs, log.iterations, log.converged, display,
                                      float(r[-1]), float(r[-1] / r[0]), geo, asy,
                                      status=status))
    result = SweepResult(rows)
    out = _output_dir(config)
    if out is not None:
        result.csv_path = write_csv(out / "sweep.csv", ReportRow.FIELDS,
                                    ([getattr(r, f) for f in ReportRow.FIELDS] for r in rows))
        fig = Figure("Iterations per damping parameter", "omega", "iterations")
        for n in config.mesh_n:
            for label in config.cycles:
                sel = [r for r in rows if r.mesh_n == n and r.cycle == label and r.dofs > 0]
                fig.line([r.omega for r in sel], [r.iterations for r in sel],
                         label=f"{label} n={n}")
        result.svg_path = fig.save(out / "sweep.svg")
        write_manifest(out / "sweep_manifest.json", "sweep", config,
                       [result.csv_path, result.svg_path], started)
    return result


# -- spectra -----------------------------------------------------------------------

@dataclass
class SpectrumResult:
    spectra: dict                # omega -> ordered complex eigenvalues (or None on failure)
    status: dict
    csv_path: Path = None
    svg_paths: list = field(default_factory=list)


def pencil_spectrum(K, M_inv):
    """Eigenvalues of ``M^-1 K`` ordered by decreasing ``|1 - lambda|``."""
    lam = np.linalg.eigvals(np.asarray(M_inv) @ (K.toarray() if hasattr(K, "toarray") else K))
    return lam[order_by_distance_from_one(lam)]


def run_spectrum(config: ExperimentConfig, problem=None) -> SpectrumResult:
    """Pencil ``(K, M_omega)`` spectrum for each omega."""
    started = _now()
    problem = problem or build_problem(config)
    if problem.system.n > 2500:
        raise ConfigError(f"dense spectrum needs n <= 2500, got {problem.system.n}")
    K = problem.system.K.toarray()
    spectra, status = {}, {}
    base = None
    if problem.relax.mode.additive:
        base = extract_m_inverse(problem.relax)
    for w in config.omegas:
        try:
            Minv = w * base if base is not None else damped_m_inverse(problem.relax, w)
            spectra[w] = pencil_spectrum(K, Minv)
            status[w] = "ok"
        except (np.linalg.LinAlgError, VankaError) as exc:
            spectra[w], status[w] = None, f"error: {exc}"
    result = SpectrumResult(spectra, status)
    out = _output_dir(config)
    if out is not None:
        rows = []
        for w in config.omegas:
            lam = spectra[w]
            if lam is None:
                rows.append([w, problem.mesh_n, config.vanka_mode, -1, math.nan, math.nan,
                             math.nan, status[w]])
                continue
            for i, z in enumerate(lam):
                rows.append([w, problem.mesh_n, config.vanka_mode, i, z.real, z.imag,
                             abs(1 - z), "ok"])
        result.csv_path = write_csv(out / "spectrum.csv",
                                    ["omega", "mesh_n", "mode", "index", "re", "im",
                                     "dist_from_one", "status"], rows)
        for w in config.omegas:
            if spectra[w] is None:
                continue
            fig = Figure(f"Pencil spectrum, omega = {w:g}", "Re lambda", "Im lambda")
            fig.scatter(spectra[w].real, spectra[w].imag, label=f"omega={w:g}", radius=1.8)
            p = fig.save(out / f"spectrum_omega_{w:g}.svg")
            result.svg_paths.append(p)
        write_manifest(out / "spectrum_manifest.json", "spectrum", config,
                       [result.csv_path, *result.svg_paths], started,
                       {"n": problem.system.n})
    return result


# -- theory vs measurement --------------------------------------------------------

@dataclass
class TheoryRow:
    omega: float
    mesh_n: int
    dofs: int
    mode: str
    n_c_sa: int
    predicted_sa: float
    rho_sa: float                # spectral radius of the SA two-grid propagator
    geometric: float
    asymptotic: float
    iterations: int
    converged: bool
    predicted_nc: dict = field(default_factory=dict)   # n_c -> predicted factor
    status: str = "ok"


def resolve_n_c(n_c_list, n):
    out = []
    for v in n_c_list:
        v = float(v)
        k = int(round(v * n)) if v < 1 else int(v)
        if not 0 < k < n:
            raise ConfigError(f"n_c = {v} gives {k}, outside 1..{n - 1}")
        out.append(k)
    return out


def measure_two_grid(problem, mode, omega, seed, tol, maxit):
    """Error-decay run (``b = 0``, seeded random ``x0``) of the two-level V(1,0) cycle."""
    n = problem.system.n
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(n)
    cfg = CycleConfig(1, 0, omega=omega, levels=2)
    relax = [problem.smoother(mode, omega)]
    return stationary_solve(problem.hierarchy, relax, np.zeros(n), cfg, tol=tol, maxit=maxit,
                            x0=x0, relative=True)


def run_theory_comparison(config: ExperimentConfig, problem=None) -> list:
    """Measured SA-AMG two-grid factors against the optimal-interpolation prediction."""
    started = _now()
    if config.levels != 2:
        config = config.with_overrides(levels=2)
    problem = problem or build_problem(config)
    sysm = problem.system
    K = sysm.K.toarray()
    L0 = problem.hierarchy[0]
    P, R = L0.P.toarray(), L0.R.toarray()
    n_c_sa = problem.hierarchy[1].n
    n_c_list = resolve_n_c(config.n_c_list, sysm.n)
    rows = []
    for w in config.omegas:
        try:
            Minv = damped_m_inverse(problem.relax, w)
            decomp = pencil_eigendecomposition(K, Minv)
            pred_sa = predicted_factor(decomp, n_c_sa)
            pred = {k: predicted_factor(decomp, k) for k in n_c_list}
            rho = spectral_radius_dense(assemble_error_propagator(K, Minv, P, R, 1, 0))
            log = measure_two_grid(problem, config.vanka_mode, w, config.seed, config.tol,
                                   config.maxit)
            geo, asy = _factors(log)
            rows.append(TheoryRow(w, problem.mesh_n, sysm.n, config.vanka_mode, n_c_sa,
                                  pred_sa, rho, geo, asy, log.iterations, log.converged, pred))
        except (TheoryError, EigenSolverError, np.linalg.LinAlgError, VankaError) as exc:
            rows.append(TheoryRow(w, problem.mesh_n, sysm.n, config.vanka_mode, n_c_sa,
                                  math.nan, math.nan, math.nan, math.nan, 0, False,
                                  {k: math.nan for k in n_c_list}, status=f"error: {exc}"))
    out = _output_dir(config)
    if out is not None:
        header = ["omega", "mesh_n", "dofs", "mode", "n_c_sa", "predicted_sa", "rho_sa",
                  "geometric", "asymptotic", "iterations", "converged"]
        header += [f"predicted_nc_{k}" for k in n_c_list] + ["status"]
        table = [[r.omega, r.mesh_n, r.dofs, r.mode, r.n_c_sa, r.predicted_sa, r.rho_sa,
                  r.geometric, r.asymptotic, r.iterations, r.converged]
                 + [r.predicted_nc[k] for k in n_c_list] + [r.status] for r in rows]
        csv_path = write_csv(out / "theory.csv", header, table)
        ws = [r.omega for r in rows]
        fig = Figure("Two-grid convergence factors", "omega", "convergence factor")
        fig.line(ws, [r.geometric for r in rows], label="geometric")
        fig.line(ws, [r.asymptotic for r in rows], label="asymptotic")
        fig.line(ws, [r.predicted_sa for r in rows], label=f"predicted n_c={n_c_sa}")
        for k in n_c_list:
            fig.line(ws, [r.predicted_nc[k] for r in rows], label=f"predicted n_c={k}")
        svg_path = fig.save(out / "theory.svg")
        write_manifest(out / "theory_manifest.json", "theory", config, [csv_path, svg_path],
                       started, {"n": sysm.n, "n_c_sa": n_c_sa, "n_c_list": n_c_list})
    return rows


# -- Vanka comparison ---------------------------------------------------------------

@dataclass
class VankaComparison:
    histories: dict              # slot label -> IterationLog
    omega: float
    csv_path: Path = None
    svg_path: Path = None

    def iterations(self, label):
        log = self.histories[label]
        return log.iterations if log.converged else None


def run_vanka_comparison(config: ExperimentConfig, problem=None) -> VankaComparison:
    """Standalone relaxation on ``K x = b`` for each mode in ``compare_modes``.

    All slots share ``x0 = 0``, ``b`` and ``omega``.  Divergence ends a run
    and is recorded, it does not abort the comparison.
    """
    started = _now()
    problem = problem or build_problem(config)
    w = config.compare_omega
    b = problem.system.rhs
    histories = {}
    for k, mode in enumerate(config.compare_modes):
        label = mode if mode not in histories else f"{mode}#{k}"
        relax = problem.smoother(mode, w)
        histories[label] = relaxation_solve(relax, b, tol=config.tol, maxit=config.compare_maxit)
    result = VankaComparison(histories, w)
    out = _output_dir(config)
    if out is not None:
        rows = []
        for label, log in histories.items():
            r0 = log.residual_norms[0]
            for i, r in enumerate(log.residual_norms):
                rows.append([label, w, problem.mesh_n, problem.system.n, i, r,
                             r / r0 if r0 else 0.0])
        result.csv_path = write_csv(out / "vanka_compare.csv",
                                    ["mode", "omega", "mesh_n", "dofs", "iteration",
                                     "residual", "relative_residual"], rows)
        summary = [[label, w, log.iterations, log.converged,
                    log.residual_norms[-1] / log.residual_norms[0]]
                   for label, log in histories.items()]
        write_csv(out / "vanka_compare_summary.csv",
                  ["mode", "omega", "iterations", "converged", "relative_residual"], summary)
        fig = Figure(f"Vanka relaxation, omega = {w:g}", "iteration", "relative residual",
                     logy=True)
        for label, log in histories.items():
            r = np.asarray(log.residual_norms)
            fig.line(np.arange(len(r)), r / r[0], label=label, markers=False)
        result.svg_path = fig.save(out / "vanka_compare.svg")
        write_manifest(out / "vanka_compare_manifest.json", "vanka-compare", config,
                       [result.csv_path, result.svg_path], started)
    return result


# -- export --------------------------------------------------------------------------

def export_system(config: ExperimentConfig, fmt="matrix-market", problem=None):
    """Write the reduced system, pressure Laplacian and hierarchy for external tools."""
    from .aggregation import dump_hierarchy
    from .sparse import write_matrix_market

    if fmt not in ("matrix-market", "csv"):
        raise ConfigError(f"unknown export format {fmt!r}")
    started = _now()
    out = _output_dir(config) or Path(".")
    problem = problem or build_problem(config)
    sysm = problem.system
    outputs = []
    meta = sysm.export(out)
    outputs += [out / "stokes_K.mtx", out / "stokes_rhs.mtx", out / "stokes.json"]
    A_p = problem.hierarchy[0].A_pressure
    write_matrix_market(out / "pressure_laplacian.mtx", A_p, symmetric=True)
    outputs.append(out / "pressure_laplacian.mtx")
    dump_hierarchy(problem.hierarchy, out / "hierarchy", config.sa_params)
    outputs.append(out / "hierarchy" / "hierarchy.json")
    if fmt == "csv":
        write_dense_csv(out / "stokes_K.csv", sysm.K.toarray())
        write_dense_csv(out / "stokes_rhs.csv", sysm.rhs.reshape(-1, 1))
        outputs += [out / "stokes_K.csv", out / "stokes_rhs.csv"]
    (out / "vanka.json").write_text(problem.relax.statistics_json(), encoding="utf-8")
    outputs.append(out / "vanka.json")
    write_manifest(out / "export_manifest.json", "export-system", config, outputs, started,
                   {"format": fmt, "system": meta})
    return outputs


def load_exported_system(directory):
    """``(K, rhs, meta)`` from an `export_system` directory."""
    d = Path(directory)
    K = read_matrix_market(d / "stokes_K.mtx")
    rhs = read_matrix_market(d / "stokes_rhs.mtx").toarray().ravel()
    meta = json.loads((d / "stokes.json").read_text())
    return K, rhs, meta

