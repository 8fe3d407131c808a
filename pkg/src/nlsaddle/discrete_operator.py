"""Dense assembly of the odd-sector operator and its structure checks.

The operator on grid node values is

    (L u)_k = sum_{j != k} (u_k - u_j) D_kj mu_j + 2 u_k Z_k + (local part),

with D the tabulated kernel difference, Z the zero-order coefficient
(column sums + tail) and the local part the gradient of the self-cell
correction divided by 2 mu.  Row sums equal 2 Z_k exactly (the difference
and local parts annihilate constants), all off-diagonal entries are
nonpositive when the kernel difference is nonnegative, and the matrix is
then a strictly diagonally dominant Z-matrix, hence monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .energy import Grid, KernelTable, OddProfile, Potential

_OFFDIAG_TOL = 1e-12


@dataclass
class DiscreteOperator:
    grid: Grid
    matrix: np.ndarray
    zero_order: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)


def assemble(grid: Grid, table: KernelTable) -> DiscreteOperator:
    """Dense operator over all grid nodes (band rows included)."""
    n = grid.n_nodes
    mu = grid.weights
    M = -table.D * mu[None, :]
    dmass = table.D @ mu
    Z = table.zero_order
    idx = np.arange(n)
    M[idx, idx] = dmass + 2.0 * Z
    # self-cell correction: graph-Laplacian form, rows scaled by 1/(2 mu);
    # np.add.at accumulates the repeated target indices
    for nb, cf in ((table.es, table.cs), (table.et, table.ct)):
        have = np.where((nb >= 0) & (cf > 0.0))[0]
        o = nb[have]
        c = cf[have]
        np.add.at(M, (have, have), c / mu[have])
        np.add.at(M, (o, o), c / mu[o])
        np.add.at(M, (have, o), -c / mu[have])
        np.add.at(M, (o, have), -c / mu[o])
    return DiscreteOperator(grid=grid, matrix=M, zero_order=Z.copy())


def apply_operator(op: DiscreteOperator, profile) -> np.ndarray:
    """Matrix-vector product; accepts an OddProfile or raw node values."""
    values = profile.values if isinstance(profile, OddProfile) else np.asarray(profile, float)
    if values.shape != (op.n,):
        raise DomainError("profile does not match the operator's grid")
    return op.matrix @ values


@dataclass
class MaxPrincipleReport:
    z_pattern: bool
    row_sums_positive: bool
    monotone_probe: bool
    min_offdiag: float
    max_offdiag: float
    max_row_sum_error: float
    n_trials: int
    min_solution_value: float
    solve_failures: int = 0

    def as_dict(self) -> dict:
        return {"z_pattern": self.z_pattern,
                "row_sums_positive": self.row_sums_positive,
                "monotone_probe": self.monotone_probe,
                "min_offdiag": self.min_offdiag,
                "max_offdiag": self.max_offdiag,
                "max_row_sum_error": self.max_row_sum_error,
                "n_trials": self.n_trials,
                "min_solution_value": self.min_solution_value,
                "solve_failures": self.solve_failures}


def check_max_principle_structure(op: DiscreteOperator, n_trials: int = 100,
                                  seed: int = 0,
                                  row_sum_reference: np.ndarray | None = None
                                  ) -> MaxPrincipleReport:
    """Z sign pattern, positive row sums, and randomized monotone solves.

    Each probe solves (L + diag(c)) u = g with random c >= 0, g >= 0 and
    checks u >= -1e-10; singular solves are reported, not fatal.  When an
    independently integrated zero-order coefficient is supplied, the
    relative row-sum error against 2x that reference is reported.
    """
    M = op.matrix
    n = op.n
    off = M[~np.eye(n, dtype=bool)]
    scale = float(np.abs(np.diag(M)).max())
    z_pattern = bool(off.max() <= _OFFDIAG_TOL * scale)
    rows = op.row_sums()
    row_sums_positive = bool(rows.min() > 0.0)
    if row_sum_reference is not None:
        ref = 2.0 * np.asarray(row_sum_reference)
        max_err = float(np.max(np.abs(rows - ref) / np.abs(ref)))
    else:
        max_err = float(np.max(np.abs(rows - 2.0 * op.zero_order)
                               / np.abs(2.0 * op.zero_order)))

    rng = np.random.default_rng(seed)
    min_val = math.inf
    failures = 0
    ok = True
    for _ in range(n_trials):
        c = rng.uniform(0.0, 1.0, size=n) * scale * 0.1
        g = rng.uniform(0.0, 1.0, size=n)
        try:
            u = np.linalg.solve(M + np.diag(c), g)
        except np.linalg.LinAlgError:
            failures += 1
            continue
        m = float(u.min())
        min_val = min(min_val, m)
        if m < -1e-10:
            ok = False
    return MaxPrincipleReport(
        z_pattern=z_pattern, row_sums_positive=row_sums_positive,
        monotone_probe=ok and failures == 0,
        min_offdiag=float(off.min()), max_offdiag=float(off.max()),
        max_row_sum_error=max_err, n_trials=n_trials,
        min_solution_value=min_val if min_val is not math.inf else float("nan"),
        solve_failures=failures)


def probe_nodes(grid: Grid, margin_cells: float = 2.0) -> np.ndarray:
    """Nodes away from the cone and from the support boundary.

    Excludes nodes within margin_cells * h of the cone and of the sphere
    |x| = R (where the zero-order coefficient blows up, respectively where
    the Dirichlet cut dominates).
    """
    h = grid.h
    keep = ((grid.cone_dist > margin_cells * h)
            & (grid.radius < grid.R - margin_cells * h))
    return np.where(keep)[0]


@dataclass
class ResidualReport:
    sup: float
    per_node: np.ndarray
    probe_idx: np.ndarray
    sup_f_scale: float


def residual(op: DiscreteOperator, profile: OddProfile, potential: Potential,
             probe_idx: np.ndarray) -> ResidualReport:
    """sup |L u - f(u)| over the probe nodes."""
    probe_idx = np.asarray(probe_idx)
    if probe_idx.size == 0:
        raise DomainError("empty probe set")
    lu = apply_operator(op, profile)
    res = lu - np.asarray(potential.f(profile.values))
    vals = res[probe_idx]
    us = np.linspace(0.0, 1.0, 2001)
    sup_f = float(np.max(np.abs(potential.f(us))))
    return ResidualReport(sup=float(np.abs(vals).max()), per_node=vals,
                          probe_idx=probe_idx, sup_f_scale=sup_f)
