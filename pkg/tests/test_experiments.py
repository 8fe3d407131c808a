import math

import numpy as np
import pytest

from nlsaddle.errors import DomainError, PreconditionError
from nlsaddle.kernels import fractional_kernel, standard_c_norm
from nlsaddle.energy import OddProfile, allen_cahn, build_grid, total_energy, zero_profile
from nlsaddle.solver import SolverConfig, minimize
from nlsaddle.experiments import (build_competitor, cone_ramp, cutoff_distance,
                                  energy_scan, measured_lipschitz, radial_ramp,
                                  theoretical_growth, transition_region_volume)


# --- ramps -------------------------------------------------------------------

def test_radial_ramp_branches():
    S = 6.0
    assert radial_ramp(S + 1.5, S) == 0.0
    assert radial_ramp(S, S) == -1.0
    assert radial_ramp(S + 3.0, S) == 1.0
    assert radial_ramp(S + 1.25, S) == pytest.approx(-0.5)


def test_radial_ramp_requires_s_at_least_two():
    with pytest.raises(DomainError):
        radial_ramp(1.0, 1.0)


def test_cone_ramp_branches():
    S, mu = 6.0, 2.0
    d = 0.3  # mu d = 0.6 <= 1: scaled branch
    s = 10.0
    t = s - d * math.sqrt(2.0)
    r = math.hypot(s, t)
    expected = radial_ramp(r, S) * mu * d
    assert cone_ramp(s, t, S, mu) == pytest.approx(expected, rel=1e-12)
    # far from the cone the ramp is unscaled
    assert cone_ramp(9.0, 1.0, S, mu) == pytest.approx(radial_ramp(math.hypot(9, 1), S))


def test_cutoff_distance_example():
    assert cutoff_distance((3, 1), S=10.0, mu=1.0) == pytest.approx(math.sqrt(2.0))
    # near the cone the scaled branch dominates
    assert cutoff_distance((3.0, 2.9), S=10.0, mu=1.0) == pytest.approx(0.1 / math.sqrt(2))
    # large mu hands it to the boundary branch
    assert cutoff_distance((3, 1), S=10.0, mu=1e6) == pytest.approx(11 - math.hypot(3, 1))
    with pytest.raises(DomainError):
        cutoff_distance((11, 1), S=10.0, mu=1.0)


# --- region volume --------------------------------------------------------------

@pytest.fixture(scope="module")
def volume_grid():
    return build_grid(R=20.0, h=0.25, m=1, R_out=22.0)


def test_transition_volume_annulus_part(volume_grid):
    # with a huge mu the strip vanishes and only the annulus remains
    for S in (4.0, 8.0):
        vol = transition_region_volume(S, 1e9, volume_grid)
        exact = math.pi * ((S + 2.0) ** 2 - S ** 2)
        assert vol == pytest.approx(exact, rel=0.02)


def test_transition_volume_decreases_in_mu(volume_grid):
    vols = [transition_region_volume(8.0, mu, volume_grid) for mu in (0.5, 1.0, 4.0, 1e9)]
    assert all(a >= b for a, b in zip(vols, vols[1:]))


def test_transition_volume_growth_exponent(volume_grid):
    S_vals = np.array([4.0, 8.0, 16.0])
    vols = [transition_region_volume(S, 1.0, volume_grid) for S in S_vals]
    slope = np.polyfit(np.log(S_vals), np.log(vols), 1)[0]
    assert abs(slope - 1.0) <= 0.15


# --- competitor ------------------------------------------------------------------

@pytest.fixture(scope="module")
def saddle_run(medium_table):
    k = fractional_kernel(0.5, 1, c_norm=standard_c_norm(0.5, 1))
    cfg = SolverConfig(R=8.0, h=0.5, gamma=0.5, m=1, max_iters=3000, grad_tol=1e-7)
    return minimize(cfg, k, allen_cahn(), table=medium_table)


def test_competitor_hypotheses(saddle_run, medium_table):
    w, rep = build_competitor(saddle_run.profile, S=3.5)
    assert rep.all_pass(), rep.as_dict()
    g = saddle_run.profile.grid
    # H4 mechanism: a node deep inside with mu d > 1 sits at the pure phase
    core = (g.radius <= rep.S) & (rep.mu * g.cone_dist > 1.0)
    if core.any():
        assert np.allclose(w.values[core], -1.0)
    # H3 mechanism: on the matching shell the competitor equals the profile
    shell = np.abs(g.radius - (rep.S + 2.0)) <= 0.5 * g.h
    assert np.array_equal(w.values[shell], saddle_run.profile.values[shell])


def test_competitor_energy_not_below_minimizer(saddle_run, medium_table):
    w, rep = build_competitor(saddle_run.profile, S=3.5)
    g = saddle_run.profile.grid
    e_u = total_energy(saddle_run.profile, g.R, medium_table).total
    e_w = total_energy(w, g.R, medium_table).total
    assert e_w >= e_u - 1e-9 * abs(e_u)


def test_competitor_radius_precondition(saddle_run):
    with pytest.raises(PreconditionError):
        build_competitor(saddle_run.profile, S=4.5)  # S + 4 >= R = 8


def test_measured_lipschitz_floor(small_grid):
    p = zero_profile(small_grid)
    assert measured_lipschitz(p, 2.0) == 0.1


def test_measured_lipschitz_dominates_cone_quotient(saddle_run):
    g = saddle_run.profile.grid
    mu = measured_lipschitz(saddle_run.profile, 6.0)
    inside = g.radius <= 6.0
    ratio = saddle_run.profile.values[inside] / np.maximum(g.cone_dist[inside], 1e-12)
    assert mu + 1e-12 >= ratio.max()


# --- scaling scan ------------------------------------------------------------------

def test_theoretical_growth_regimes():
    assert theoretical_growth(0.25, 1) == (1.5, "subcritical")
    assert theoretical_growth(0.5, 1) == (1.0, "critical-log")
    assert theoretical_growth(0.75, 1) == (1.0, "supercritical")
    assert theoretical_growth(0.25, 2) == (3.5, "subcritical")


def test_zero_profile_scan_slope_is_area_law(volume_grid):
    from nlsaddle.energy import build_kernel_table
    tab = build_kernel_table(volume_grid, fractional_kernel(0.5, 1))
    rep = energy_scan(zero_profile(volume_grid), [4, 6, 8, 10, 12], tab)
    assert rep.slope == pytest.approx(2.0, abs=0.05)
    assert rep.regime == "critical-log"


def test_scan_validation(saddle_run, medium_table):
    with pytest.raises(DomainError):
        energy_scan(saddle_run.profile, [2.0, 3.0], medium_table)
    with pytest.raises(PreconditionError):
        energy_scan(saddle_run.profile, [2.0, 3.0, 6.0], medium_table)
