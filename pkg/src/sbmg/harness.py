"""Experiment driver: configure, solve, measure, emit CSV records.

Reproduces the solver experiments on the unit disk: f = 1, g = 0, exact
solution u = (1 - |x|^2)/4.  One record per solve with iteration counts,
timings, discretization error and shift statistics.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .assembly import shift_statistics
from .fem import cell_quadrature, shape_values
from .geometry import unit_circle
from .linalg import gmres
from .multigrid import MgHierarchy, build_h_hierarchy, build_p_hierarchy, v_cycle
from .smoother import boundary_patch_fraction

CSV_HEADER = (
    "mode,p,refinements,lambda,shyness,smooth_steps,dofs,iterations,converged,"
    "setup_time_s,solve_time_s,gmg_throughput,l2_error,shift_min,shift_max,"
    "boundary_patch_fraction,t_s1,t_s2"
)


def exact_solution(x, y):
    return 0.25 * (1.0 - x * x - y * y)


@dataclass(frozen=True)
class SolverConfig:
    """One experiment; defaults are the benchmark settings."""

    mode: str = "h"
    p: int = 1
    refinements: int = 3
    lam: float = 0.0
    shyness: int = 3
    smooth_steps: int = 3
    sigma: float = 5.0
    tol: float = 1e-8
    max_iter: int = 100
    zero_shift: bool = False
    timing_reps: int = 3

    def validate(self) -> None:
        if self.mode not in ("h", "p"):
            raise ValueError(f"mg mode must be 'h' or 'p', got {self.mode!r}")
        if not 1 <= self.p <= 8:
            raise ValueError(f"degree out of range: {self.p}")
        if self.mode == "p" and self.p < 2:
            raise ValueError("p-multigrid needs degree >= 2")
        if not 0 <= self.refinements <= 10:
            raise ValueError(f"refinements out of range: {self.refinements}")
        if self.mode == "h" and self.refinements < 1:
            raise ValueError("h-multigrid needs at least one refinement")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1]: {self.lam}")
        if not 1 <= self.shyness <= 4:
            raise ValueError(f"shyness must be in [1, 4]: {self.shyness}")
        if self.smooth_steps < 1:
            raise ValueError(f"smooth steps must be >= 1: {self.smooth_steps}")
        if self.sigma <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise ValueError("sigma, tol and max-iter must be positive")


@dataclass
class ExperimentRecord:
    config: SolverConfig
    dofs: int = 0
    iterations: int = -1
    converged: bool = False
    setup_time_s: float = 0.0
    solve_time_s: float = 0.0
    gmg_throughput: float = 0.0
    l2_error: float = float("nan")
    shift_min: float = 0.0
    shift_max: float = 0.0
    boundary_patch_fraction: float = 0.0
    t_s1: float = 0.0
    t_s2: float = 0.0
    uncovered_dofs: int = 0

    def to_row(self) -> List[str]:
        c = self.config
        return [
            c.mode,
            str(c.p),
            str(c.refinements),
            repr(c.lam),
            str(c.shyness),
            str(c.smooth_steps),
            str(self.dofs),
            str(self.iterations),
            "true" if self.converged else "false",
            f"{self.setup_time_s:.6f}",
            f"{self.solve_time_s:.6f}",
            f"{self.gmg_throughput:.3f}",
            repr(self.l2_error),
            repr(self.shift_min),
            repr(self.shift_max),
            repr(self.boundary_patch_fraction),
            f"{self.t_s1:.6f}",
            f"{self.t_s2:.6f}",
        ]


def build_hierarchy(config: SolverConfig) -> MgHierarchy:
    config.validate()
    geom = unit_circle()
    builder = build_h_hierarchy if config.mode == "h" else build_p_hierarchy
    return builder(
        config.refinements,
        config.p,
        geom,
        config.lam,
        shyness=config.shyness,
        smooth_steps=config.smooth_steps,
        sigma=config.sigma,
        zero_shift=config.zero_shift,
    )


def l2_error_active(hier: MgHierarchy, x: np.ndarray) -> float:
    """L2 norm of u_h - u over the active cells of the finest level."""
    fine = hier.finest
    dh = fine.dh
    m = fine.mesh
    quad = cell_quadrature(dh.p)
    Nq = shape_values(dh.element, quad.points)
    n = m.cells_per_dim
    h = m.h
    cells = np.nonzero(m.active.ravel())[0]
    total = 0.0
    chunk = 65536
    for start in range(0, len(cells), chunk):
        cs = cells[start:start + chunk]
        cd = dh.cells_dofs(cs)
        U = x[cd]
        vals = U @ Nq.T
        ox = m.origin[0] + h * (cs % n)
        oy = m.origin[1] + h * (cs // n)
        X = ox[:, None] + h * quad.points[None, :, 0]
        Y = oy[:, None] + h * quad.points[None, :, 1]
        err = vals - exact_solution(X, Y)
        total += float(np.sum(err * err * quad.weights[None, :])) * h * h
    return math.sqrt(total)


def _time_vcycle(hier: MgHierarchy, rhs: np.ndarray, stage_count: int, reps: int) -> float:
    top = len(hier.levels) - 1
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        v_cycle(hier, top, rhs, stage_count=stage_count)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run(config: SolverConfig) -> ExperimentRecord:
    """Build the hierarchy, solve with V-cycle-preconditioned GMRES, record."""
    config.validate()
    rec = ExperimentRecord(config=config)

    t0 = time.perf_counter()
    hier = build_hierarchy(config)
    rec.setup_time_s = time.perf_counter() - t0

    fine = hier.finest
    A = fine.system.matrix
    b = fine.system.rhs
    t1 = time.perf_counter()
    # left side matches the reference measurements: the monitored quantity is
    # the preconditioned residual, which is insensitive to float noise in the
    # huge extrapolated-penalty rows at high degree
    x, iters, converged = gmres(
        A, b, M=hier.apply, tol=config.tol, maxit=config.max_iter, side="left"
    )
    rec.solve_time_s = time.perf_counter() - t1

    rec.dofs = int(fine.dh.dof_is_active().sum())
    rec.converged = bool(converged)
    rec.iterations = iters if converged else -1
    rec.gmg_throughput = rec.dofs / rec.solve_time_s if rec.solve_time_s > 0 else 0.0
    rec.l2_error = l2_error_active(hier, x)
    smin, smax = shift_statistics(fine.system, fine.mesh.h)
    # reported minimum is the inward extreme: 0 when every shift points outward
    rec.shift_min = min(0.0, smin)
    rec.shift_max = smax
    rec.boundary_patch_fraction = boundary_patch_fraction(fine.patches)
    rec.uncovered_dofs = int(len(fine.patches.uncovered_dofs))
    if config.timing_reps > 0:
        rec.t_s1 = _time_vcycle(hier, b, 1, config.timing_reps)
        rec.t_s2 = _time_vcycle(hier, b, 2, config.timing_reps)
    return rec


def solve_and_solution(config: SolverConfig):
    """run() variant returning the raw solution vector (for oracle tests)."""
    config.validate()
    hier = build_hierarchy(config)
    fine = hier.finest
    x, iters, converged = gmres(
        fine.system.matrix,
        fine.system.rhs,
        M=hier.apply,
        tol=config.tol,
        maxit=config.max_iter,
        side="left",
    )
    return hier, x, iters, converged


def sweep(configs: Iterable[SolverConfig], out_path) -> List[ExperimentRecord]:
    """Run configs in order, one CSV row each, deterministic row order."""
    records = []
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for config in configs:
            rec = run(config)
            writer.writerow(rec.to_row())
            fh.flush()
            records.append(rec)
    return records


def verify_convergence(
    p: int,
    levels: Sequence[int],
    base: Optional[SolverConfig] = None,
):
    """Observed L2 order: least-squares slope of log error against log h.

    lambda = 0 per contract.  Returns (order, errors, hs).
    """
    base = base or SolverConfig()
    errors = []
    hs = []
    for L in levels:
        config = replace(base, p=p, refinements=L, lam=0.0)
        hier, x, iters, converged = solve_and_solution(config)
        errors.append(l2_error_active(hier, x))
        hs.append(hier.finest.mesh.h)
        del hier, x
    slope = float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
    return slope, errors, hs
