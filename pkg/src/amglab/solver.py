"""Multigrid cycles, stationary iteration, and flexible GMRES."""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .sparse import SingularMatrixError


class CoarseSolveError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CycleConfig:
    nu1: int = 1
    nu2: int = 0
    omega: float = 1.0
    inner_fgmres: int = 0     # 0 = plain damped sweeps
    levels: int = 2

    def __post_init__(self):
        if self.nu1 < 0 or self.nu2 < 0:
            raise ValueError("sweep counts must be nonnegative")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.levels < 2:
            raise ValueError("a cycle needs at least two levels")

    @property
    def label(self):
        return f"V({self.nu1},{self.nu2})"

    @classmethod
    def parse(cls, label, **kw):
        m = re.fullmatch(r"\s*V?\(?\s*(\d+)\s*,\s*(\d+)\s*\)?\s*", str(label))
        if not m:
            raise ValueError(f"cannot parse cycle label {label!r}")
        return cls(int(m.group(1)), int(m.group(2)), **kw)


@dataclass
class IterationLog:
    residual_norms: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    x: np.ndarray = field(default=None, repr=False)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual"])
            for k, r in enumerate(self.residual_norms):
                w.writerow([k, repr(float(r))])


def _smooth(relax, x, b, config, steps):
    if steps == 0:
        return x
    if config.inner_fgmres > 0:
        smoother = wrapped_relaxation(relax, config.inner_fgmres)
        for _ in range(steps):
            x = smoother(x, b)
        return x
    for _ in range(steps):
        x = relax.sweep(x, b, config.omega)
    return x


def cycle(hierarchy, relax, x, b, config: CycleConfig, level=0):
    """One V-cycle starting on ``level``.

    ``relax`` holds one smoother per level (the coarsest level is solved
    directly).  With two levels this applies
    ``(I - w M^-1 K)^nu2 (I - P (RKP)^-1 R K) (I - w M^-1 K)^nu1`` to the error.
    """
    coarsest = min(config.levels, len(hierarchy)) - 1
    if coarsest < 1:
        raise ValueError("cycle needs a hierarchy with at least two levels")
    L = hierarchy[level]
    if level == coarsest:
        return _coarse_solve(L, b)
    x = np.array(x, dtype=float)
    x = _smooth(relax[level], x, b, config, config.nu1)
    r = b - L.K @ x
    rc = L.R @ r
    if level + 1 == coarsest:
        ec = _coarse_solve(hierarchy[level + 1], rc)
    else:
        ec = cycle(hierarchy, relax, np.zeros_like(rc), rc, config, level + 1)
    x = x + L.P @ ec
    return _smooth(relax[level], x, b, config, config.nu2)


def _coarse_solve(level, b):
    try:
        lu = level.lu
    except SingularMatrixError as exc:
        raise CoarseSolveError(f"coarse operator of size {level.n} is singular "
                               f"(pivot {exc.pivot_index})") from exc
    return lu.solve(b)


def stationary_solve(hierarchy, relax, b, config: CycleConfig, tol=1e-10, maxit=100,
                     x0=None, relative=True) -> IterationLog:
    """Repeat `cycle` until the residual norm drops below ``tol``.

    The test is ``|r_k| <= tol |r_0|`` when ``relative`` else ``|r_k| <= tol``.
    Non-finite residuals stop the iteration as diverged.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    K = hierarchy[0].K
    x = np.zeros(K.shape[0]) if x0 is None else np.array(x0, dtype=float)
    r0 = float(np.linalg.norm(b - K @ x))
    log = IterationLog([r0])
    target = tol * r0 if relative else tol
    if r0 <= target or r0 == 0.0:
        log.converged, log.x = True, x
        return log
    for _ in range(maxit):
        x = cycle(hierarchy, relax, x, b, config)
        r = float(np.linalg.norm(b - K @ x))
        log.residual_norms.append(r)
        log.iterations += 1
        if not math.isfinite(r):
            break
        if r <= target:
            log.converged = True
            break
    log.x = x
    return log


def relaxation_solve(relax, b, tol=1e-10, maxit=1000, x0=None, omega=None) -> IterationLog:
    """Relaxation alone as a stationary iteration on ``K x = b``."""
    K = relax.K
    x = np.zeros(K.shape[0]) if x0 is None else np.array(x0, dtype=float)
    r0 = float(np.linalg.norm(b - K @ x))
    log = IterationLog([r0])
    if r0 == 0.0:
        log.converged, log.x = True, x
        return log
    for _ in range(maxit):
        x = relax.sweep(x, b, omega)
        r = float(np.linalg.norm(b - K @ x))
        log.residual_norms.append(r)
        log.iterations += 1
        if not math.isfinite(r) or r > 1e12 * r0:
            break
        if r <= tol * r0:
            log.converged = True
            break
    log.x = x
    return log


def _as_action(op):
    if op is None:
        return lambda v: v
    if callable(op):
        return op
    return lambda v: op @ v


def fgmres(apply_operator, apply_preconditioner, b, tol=1e-10, maxit=100, restart=None,
           x0=None):
    """Flexible GMRES (right preconditioning, which may change every step).

    Residual norms in the log are the least-squares estimates, hence
    non-increasing within each restart window.  Returns ``(x, log)``.
    """
    A = _as_action(apply_operator)
    Minv = _as_action(apply_preconditioner)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    restart = maxit if restart is None else restart
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A(x) if x0 is not None else b.copy()
    beta = float(np.linalg.norm(r))
    log = IterationLog([beta])
    target = tol * beta
    if beta == 0.0:
        log.converged, log.x = True, x
        return x, log
    while log.iterations < maxit:
        m = min(restart, maxit - log.iterations)
        V = np.zeros((n, m + 1))
        Z = np.zeros((n, m))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[:, 0] = r / beta
        j_done = 0
        breakdown = False
        for j in range(m):
            Z[:, j] = Minv(V[:, j])
            w = A(Z[:, j])
            for i in range(j + 1):
                H[i, j] = V[:, i] @ w
                w = w - H[i, j] * V[:, i]
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j] <= 1e-14 * max(1.0, np.abs(H[:j + 2, j]).max())
            if not breakdown:
                V[:, j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if denom == 0 else (H[j, j] / denom, H[j + 1, j] / denom)
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_done = j + 1
            log.iterations += 1
            log.residual_norms.append(abs(g[j + 1]))
            if abs(g[j + 1]) <= target or breakdown:
                break
        y = scipy.linalg.solve_triangular(H[:j_done, :j_done], g[:j_done]) if j_done else []
        x = x + Z[:, :j_done] @ y
        if log.residual_norms[-1] <= target:
            log.converged = True
            break
        if breakdown:
            break
        r = b - A(x)
        beta = float(np.linalg.norm(r))
        if beta <= target:
            log.converged = True
            break
    log.x = x
    return x, log


def wrapped_relaxation(relax, k):
    """Smoother action: ``k`` FGMRES steps on ``K d = r``, one sweep per step."""
    if k < 1:
        raise ValueError("wrapped_relaxation needs k >= 1")
    K = relax.K

    def precondition(v):
        return relax.sweep(np.zeros_like(v), v)

    def smoother(x, b):
        r = b - K @ x
        if not np.any(r):
            return np.array(x, dtype=float)
        d, _ = fgmres(K, precondition, r, tol=0.0, maxit=k)
        return x + d

    return smoother


def convergence_factors(log, window=5):
    """``(geometric, asymptotic)`` convergence factors of a residual history.

    geometric is ``(r_k / r_0)^(1/k)``; asymptotic is the geometric mean of the
    last ``min(window, k - 1)`` consecutive ratios.
    """
    r = np.asarray(log.residual_norms if isinstance(log, IterationLog) else log, dtype=float)
    if len(r) < 3:
        raise ValueError("convergence_factors needs at least three residuals")
    k = len(r) - 1
    geometric = (r[-1] / r[0]) ** (1.0 / k) if r[0] > 0 else 0.0
    m = min(window, k - 1)
    if r[-1] == 0.0:
        asymptotic = 0.0
    else:
        asymptotic = (r[-1] / r[-1 - m]) ** (1.0 / m)
    return float(geometric), float(asymptotic)
