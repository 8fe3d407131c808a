import numpy as np
import pytest

from nlsaddle.errors import DomainError
from nlsaddle.kernels import fractional_kernel, standard_c_norm
from nlsaddle.energy import (allen_cahn, build_grid, total_energy, zero_potential,
                             zero_profile)
from nlsaddle.solver import (SolverConfig, continuation, initial_guess, minimize)

KSTD = fractional_kernel(0.5, 1, c_norm=standard_c_norm(0.5, 1))


def test_initial_guess_values(medium_grid):
    p = initial_guess(medium_grid, mu0=1.0)
    g = medium_grid
    assert p.values.min() >= 0.0 and p.values.max() <= 1.0
    # clamped distance profile away from the boundary
    core = (g.radius <= g.R - 2.0) & (g.cone_dist >= 2.0)
    assert np.allclose(p.values[core], np.minimum(1.0, g.cone_dist[core]))
    near = (g.radius <= g.R - 2.0) & (g.cone_dist <= 0.9)
    assert np.allclose(p.values[near], g.cone_dist[near])


def test_initial_guess_requires_positive_slope(medium_grid):
    with pytest.raises(DomainError):
        initial_guess(medium_grid, mu0=0.0)


def test_config_validation():
    with pytest.raises(DomainError):
        SolverConfig(R=-1, h=0.5, gamma=0.5, m=1)
    with pytest.raises(DomainError):
        SolverConfig(R=8, h=0.5, gamma=1.5, m=1)


def test_zero_potential_zero_init_is_stationary(small_table):
    cfg = SolverConfig(R=small_table.grid.R, h=small_table.grid.h, gamma=0.5, m=1,
                       max_iters=50)
    res = minimize(cfg, fractional_kernel(0.5, 1), zero_potential(),
                   init=zero_profile(small_table.grid), table=small_table)
    assert res.trace.converged
    assert res.trace.n_iters == 0
    assert res.breakdown.total == 0.0
    assert np.all(res.profile.values == 0.0)


@pytest.fixture(scope="module")
def medium_solve(medium_table):
    cfg = SolverConfig(R=8.0, h=0.5, gamma=0.5, m=1, max_iters=3000, grad_tol=1e-7)
    return minimize(cfg, KSTD, allen_cahn(), table=medium_table)


def test_solve_energy_trace_monotone(medium_solve):
    E = np.array(medium_solve.trace.energies)
    assert np.all(np.diff(E) <= 1e-12 * np.abs(E[:-1]) + 1e-12)
    assert medium_solve.trace.converged


def test_solve_bounds_and_nontriviality(medium_solve, medium_table):
    u = medium_solve.profile.values
    assert u.min() >= 0.0 and u.max() <= 1.0
    g = medium_solve.profile.grid
    far = (g.cone_dist >= 2.5) & (g.radius <= 5.0)
    assert u[far].min() > 0.1
    e0 = total_energy(zero_profile(g), g.R, medium_table).total
    assert medium_solve.breakdown.total < e0


def test_solve_interior_strictly_below_one(medium_solve):
    g = medium_solve.profile.grid
    probe = (g.radius <= g.R - 2 * g.h) & (g.cone_dist > 2 * g.h)
    assert medium_solve.profile.values[probe].max() < 1.0


def test_continuation_single_stage_matches_minimize(small_table):
    k = fractional_kernel(0.5, 1, c_norm=standard_c_norm(0.5, 1))
    cfg = SolverConfig(R=small_table.grid.R, h=small_table.grid.h, gamma=0.5, m=1,
                       max_iters=500, grad_tol=1e-7, R_schedule=(small_table.grid.R,))
    cont = continuation(cfg, k)
    cfg2 = SolverConfig(R=small_table.grid.R, h=small_table.grid.h, gamma=0.5, m=1,
                        max_iters=500, grad_tol=1e-7)
    plain = minimize(cfg2, k)
    assert np.allclose(cont.profile.values, plain.profile.values, atol=1e-8)


def test_continuation_profiles_stabilize():
    cfg = SolverConfig(R=12.0, h=0.5, gamma=0.5, m=1, max_iters=2000,
                       grad_tol=1e-7, R_schedule=(6.0, 9.0, 12.0))
    cont = continuation(cfg, KSTD)
    diffs = [st.sup_diff_common for st in cont.stages[1:]]
    assert len(diffs) == 2
    assert diffs[1] <= diffs[0]
    # warm-started stages stay close on the common region
    assert not cont.stages[-1].flagged


def test_continuation_requires_increasing_schedule():
    cfg = SolverConfig(R=8.0, h=0.5, gamma=0.5, m=1, R_schedule=(8.0, 6.0))
    with pytest.raises(DomainError):
        continuation(cfg, KSTD)
