"""Projected descent on the discrete odd-sector energy.

Minimizes over node values constrained to [0, 1] (the sign-rearranged
representative is energetically optimal, so the outer-octant values are
kept nonnegative).  Monotone spectral projected gradient: Barzilai-Borwein
trial steps with Armijo backtracking along the projection arc, so the
energy trace is non-increasing by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError
from .kernels import RadialKernel
from .doubly_radial import gauss_jacobi_rule
from .energy import (EnergyBreakdown, EnergyModel, Grid, KernelTable, OddProfile,
                     Potential, allen_cahn, build_grid, build_kernel_table,
                     total_energy)


@dataclass
class SolverConfig:
    R: float
    h: float
    gamma: float
    m: int
    R_out: float | None = None
    max_iters: int = 5000
    grad_tol: float = 1e-6
    seed: int = 0
    R_schedule: tuple = ()
    mu0: float = 1.0
    quad_order: int = 32
    armijo: float = 1e-4
    step_min: float = 1e-10
    step_max: float = 1e10
    assume_positive: bool = False

    def __post_init__(self):
        if self.R <= 0 or self.h <= 0 or self.grad_tol <= 0 or self.max_iters < 1:
            raise DomainError("solver config requires positive numeric fields")
        if not (0.0 < self.gamma < 1.0):
            raise DomainError("gamma must lie in (0,1)")


@dataclass
class SolveTrace:
    energies: list = field(default_factory=list)
    pg_norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False
    n_iters: int = 0


@dataclass
class SolveResult:
    profile: OddProfile
    breakdown: EnergyBreakdown
    trace: SolveTrace
    table: KernelTable


def initial_guess(grid: Grid, mu0: float) -> OddProfile:
    """Clamped-distance ansatz min(1, mu0 d(x)) tapered to zero at |x| = R."""
    if mu0 <= 0.0:
        raise DomainError("mu0 must be positive")
    r = grid.radius
    cutoff = np.clip((grid.R - r) / 2.0, 0.0, 1.0)
    vals = np.minimum(1.0, mu0 * grid.cone_dist) * cutoff
    return OddProfile(grid, vals)


def _project(u: np.ndarray) -> np.ndarray:
    return np.clip(u, 0.0, 1.0)


def minimize(config: SolverConfig, kernel: RadialKernel, potential: Potential | None = None,
             init: OddProfile | None = None, table: KernelTable | None = None) -> SolveResult:
    """Run the projected descent; the energy trace is strictly non-increasing.

    Aborts with ConvergenceError on NaN or if backtracking cannot produce a
    non-increasing step.
    """
    if potential is None:
        potential = allen_cahn()
    if table is None:
        grid = build_grid(config.R, config.h, config.m, config.R_out)
        rule = gauss_jacobi_rule(config.quad_order, config.m)
        table = build_kernel_table(grid, kernel, rule,
                                   assume_positive=config.assume_positive)
    grid = table.grid
    model = EnergyModel(table, potential)
    if init is None:
        init = initial_guess(grid, config.mu0)
    u = _project(model.restrict(init))

    trace = SolveTrace()
    E, g = model.value_and_grad(u)
    pg0 = float(np.abs(u - _project(u - g)).max())
    tol = max(config.grad_tol * pg0, 1e-300)
    trace.energies.append(E)
    trace.pg_norms.append(pg0)
    alpha = 1.0 / max(1e-12, float(np.abs(g).max()))
    s_prev = None
    y_prev = None

    for it in range(config.max_iters):
        pg = float(np.abs(u - _project(u - g)).max())
        if it > 0:
            trace.pg_norms.append(pg)
        if pg <= tol:
            trace.converged = True
            break
        d = _project(u - alpha * g) - u
        gd = float(g @ d)
        if gd >= 0.0:
            # degenerate direction; fall back to a tiny safeguarded step
            alpha = max(config.step_min, 0.1 * alpha)
            d = _project(u - alpha * g) - u
            gd = float(g @ d)
            if gd >= 0.0:
                trace.converged = True
                break
        lam = 1.0
        accepted = False
        for _ in range(60):
            u_new = u + lam * d
            E_new, g_new = model.value_and_grad(u_new)
            if not math.isfinite(E_new):
                raise ConvergenceError(f"energy became non-finite at iteration {it}")
            if E_new <= E + config.armijo * lam * gd:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            if E_new <= E + 1e-14 * abs(E):
                u, E, g = u_new, E_new, g_new
                trace.energies.append(E)
                trace.converged = True
                break
            raise ConvergenceError(
                f"backtracking exhausted with increasing energy at iteration {it}")
        s = u_new - u
        y = g_new - g
        u, E, g = u_new, E_new, g_new
        trace.energies.append(E)
        trace.steps.append(lam)
        sy = float(s @ y)
        if sy > 0.0:
            alpha = float(s @ s) / sy
        else:
            alpha *= 2.0
        alpha = min(max(alpha, config.step_min), config.step_max)
        s_prev, y_prev = s, y
    trace.n_iters = len(trace.energies) - 1

    profile = model.embed(u)
    breakdown = total_energy(profile, grid.R, table, potential)
    return SolveResult(profile=profile, breakdown=breakdown, trace=trace, table=table)


@dataclass
class ContinuationStage:
    R: float
    breakdown: EnergyBreakdown
    sup_diff_common: float
    flagged: bool
    n_iters: int


@dataclass
class ContinuationResult:
    profile: OddProfile
    stages: list
    table: KernelTable


def continuation(config: SolverConfig, kernel: RadialKernel,
                 potential: Potential | None = None) -> ContinuationResult:
    """Solve over the increasing R_schedule, warm-starting each stage from
    the previous profile extended by zero; stages whose profiles move by
    more than 10% sup-norm on the common region are flagged."""
    if potential is None:
        potential = allen_cahn()
    schedule = tuple(config.R_schedule) or (config.R,)
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise DomainError("R_schedule must be strictly increasing")
    prev_profile = None
    prev_R = None
    stages = []
    result = None
    for R in schedule:
        from dataclasses import replace
        cfg = replace(config, R=R, R_out=None if config.R_out is None else config.R_out,
                      R_schedule=())
        grid = build_grid(cfg.R, cfg.h, cfg.m, cfg.R_out)
        init = None
        if prev_profile is not None:
            init = _transfer(prev_profile, grid)
        rule = gauss_jacobi_rule(cfg.quad_order, cfg.m)
        table = build_kernel_table(grid, kernel, rule, assume_positive=cfg.assume_positive)
        result = minimize(cfg, kernel, potential, init=init, table=table)
        sup_diff = float("nan")
        flagged = False
        if prev_profile is not None:
            common = min(prev_R, R) - 2.0
            sup_diff = _sup_diff(prev_profile, result.profile, common)
            scale = max(float(np.abs(result.profile.values).max()), 1e-30)
            flagged = sup_diff > 0.1 * scale
        stages.append(ContinuationStage(R=R, breakdown=result.breakdown,
                                        sup_diff_common=sup_diff, flagged=flagged,
                                        n_iters=result.trace.n_iters))
        prev_profile, prev_R = result.profile, R
    return ContinuationResult(profile=result.profile, stages=stages, table=result.table)


def _transfer(profile: OddProfile, grid: Grid) -> OddProfile:
    """Copy values onto a new grid by lattice index; new nodes start at 0."""
    src = {(int(i), int(j)): v for i, j, v in
           zip(profile.grid.ii, profile.grid.jj, profile.values)}
    vals = np.array([src.get((int(i), int(j)), 0.0)
                     for i, j in zip(grid.ii, grid.jj)])
    return OddProfile(grid, vals)


def _sup_diff(p1: OddProfile, p2: OddProfile, radius: float) -> float:
    src = {(int(i), int(j)): v for i, j, v in zip(p2.grid.ii, p2.grid.jj, p2.values)}
    mask = p1.grid.radius <= radius
    diffs = [abs(v - src.get((int(i), int(j)), 0.0))
             for i, j, v, m in zip(p1.grid.ii, p1.grid.jj, p1.values, mask) if m]
    return float(max(diffs)) if diffs else 0.0
