import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsaddle.errors import ConvergenceError, DomainError, SingularityError
from nlsaddle.kernels import fractional_kernel, tabulated_kernel
from nlsaddle.doubly_radial import (DoublyRadialPoint, appell_f2, appell_prefactor,
                                    cone_distance, exterior_tail_coefficient,
                                    f2_arguments, gauss_jacobi_rule, j_kernel,
                                    j_kernel_adaptive, j_kernel_appell, j_values,
                                    kbar, kernel_difference, omega_sphere,
                                    sample_outer_orbits, star,
                                    verify_kernel_inequality, weight_integral,
                                    zero_order_coefficient)

K1 = fractional_kernel(0.5, 1)
RULE1 = gauss_jacobi_rule(2, 1)


def four_term_sum(s, t, sig, tau, power=3.0):
    """Independent oracle: the exact m=1 spherical sum for the power kernel."""
    total = 0.0
    for es in (1, -1):
        for et in (1, -1):
            r2 = s * s + t * t + sig * sig + tau * tau - 2 * s * sig * es - 2 * t * tau * et
            total += r2 ** (-power / 2.0)
    return total


# --- geometry ---------------------------------------------------------------

def test_star_examples():
    assert star((3, 1)) == DoublyRadialPoint(1, 3)
    assert star((2, 2)) == DoublyRadialPoint(2, 2)
    p = DoublyRadialPoint(0.7, 0.1)
    assert star(star(p)) == p


def test_region_classification():
    assert DoublyRadialPoint(3, 1).region == "outer"
    assert DoublyRadialPoint(1, 3).region == "inner"
    assert DoublyRadialPoint(2, 2).region == "cone"


def test_cone_distance_values():
    assert cone_distance((3, 1)) == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert cone_distance((2, 2)) == 0.0
    assert cone_distance((0, 5)) == pytest.approx(5.0 / math.sqrt(2.0), rel=1e-12)


def test_negative_coordinates_rejected():
    with pytest.raises(DomainError):
        DoublyRadialPoint(-1.0, 0.5)


# --- quadrature rules --------------------------------------------------------

@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_rule_weights_sum_to_weight_integral(m):
    rule = gauss_jacobi_rule(32, m)
    assert rule.weights.min() > 0
    assert rule.weights.sum() == pytest.approx(weight_integral(m), abs=1e-12)


def test_omega_sphere_values():
    assert omega_sphere(1) == 2.0
    assert omega_sphere(2) == pytest.approx(2.0 * math.pi, rel=1e-14)


def test_c_m_at_two():
    # prefactor carries c_m^2 with c_2 = 2 sqrt(pi)/Gamma(1/2) = 2
    assert gauss_jacobi_rule(8, 2).prefactor == pytest.approx(4.0, rel=1e-12)


# --- J kernel ----------------------------------------------------------------

def test_j_kernel_axis_example():
    # J(1,0,2,0) = 2 [K(1) + K(3)] = 56/27
    assert j_kernel(K1, (1, 0), (2, 0), RULE1) == pytest.approx(56.0 / 27.0, rel=1e-13)
    assert four_term_sum(1, 0, 2, 0) == pytest.approx(56.0 / 27.0, rel=1e-13)


def test_j_kernel_interior_example():
    expected = four_term_sum(2, 1, 3, 1)
    assert expected == pytest.approx(1.103846, abs=1e-6)
    assert j_kernel(K1, (2, 1), (3, 1), RULE1) == pytest.approx(expected, rel=1e-13)


def test_j_kernel_refuses_diagonal_and_negative():
    with pytest.raises(SingularityError):
        j_kernel(K1, (2, 1), (2, 1), RULE1)
    with pytest.raises(DomainError):
        j_kernel(K1, (2, -1), (3, 1), RULE1)


@given(st.floats(0.05, 20), st.floats(0.0, 20), st.floats(0.05, 20), st.floats(0.0, 20))
@settings(max_examples=200, deadline=None)
def test_j_symmetry_m1(s, t, sig, tau):
    if abs(s - sig) + abs(t - tau) < 1e-9 * (s + sig):
        return
    a = j_kernel(K1, (s, t), (sig, tau), RULE1)
    b = j_kernel(K1, (sig, tau), (s, t), RULE1)
    assert a == pytest.approx(b, rel=1e-12)


def test_j_symmetry_m2_fixed_rule():
    k2 = fractional_kernel(0.25, 2)
    rule = gauss_jacobi_rule(32, 2)
    rng = np.random.default_rng(5)
    for _ in range(20):
        s, t = sample_outer_orbits(rng, 1)
        sig, tau = sample_outer_orbits(rng, 1)
        a = j_kernel(k2, (s[0], t[0]), (sig[0], tau[0]), rule)
        b = j_kernel(k2, (sig[0], tau[0]), (s[0], t[0]), rule)
        assert a == pytest.approx(b, rel=1e-12)


def test_j_quadrature_doubling_converges():
    k2 = fractional_kernel(0.5, 2)
    val, converged = j_kernel_adaptive(k2, (1.0, 0.5), (2.0, 0.8), rtol=1e-8)
    assert converged
    r64 = gauss_jacobi_rule(64, 2)
    r128 = gauss_jacobi_rule(128, 2)
    a = j_kernel(k2, (1.0, 0.4), (1.6, 0.9), r64)
    b = j_kernel(k2, (1.0, 0.4), (1.6, 0.9), r128)
    assert abs(a - b) <= 1e-8 * abs(b)


# --- averaged kernel ----------------------------------------------------------

def test_kbar_is_quarter_of_j_for_m1():
    assert kbar(K1, (1, 0), (2, 0), RULE1) == pytest.approx(56.0 / 108.0, rel=1e-13)


def test_kbar_symmetry_and_star_identities():
    for (p, q) in [((2, 1), (3, 1)), ((0.5, 0.2), (1.5, 0.9)), ((4, 2), (1, 0.3))]:
        a = kbar(K1, p, q, RULE1)
        assert kbar(K1, q, p, RULE1) == pytest.approx(a, rel=1e-12)
        ps, qs = (p[1], p[0]), (q[1], q[0])
        assert kbar(K1, ps, q, RULE1) == pytest.approx(kbar(K1, p, qs, RULE1), rel=1e-12)
        assert kbar(K1, ps, qs, RULE1) == pytest.approx(a, rel=1e-12)


def test_kernel_difference_example():
    expected = (four_term_sum(2, 1, 3, 1) - four_term_sum(2, 1, 1, 3)) / 4.0
    assert expected == pytest.approx(0.242701, abs=2e-6)
    assert kernel_difference(K1, (2, 1), (3, 1), RULE1) == pytest.approx(expected, rel=1e-12)
    assert expected > 0


def test_kernel_difference_on_cone_is_zero():
    assert kernel_difference(K1, (2, 1), (2.5, 2.5), RULE1) == 0.0


def test_kernel_difference_rejects_inner():
    with pytest.raises(DomainError):
        kernel_difference(K1, (1, 2), (3, 1), RULE1)
    with pytest.raises(DomainError):
        kernel_difference(K1, (2, 1), (1, 3), RULE1)


def test_kernel_difference_far_field_decay():
    near = kernel_difference(K1, (2, 1), (3, 1), RULE1)
    far = kernel_difference(K1, (2, 1), (30, 1), RULE1)
    assert 0 < far < near


# --- randomized inequality verification ---------------------------------------

def test_verify_inequality_fractional_quick():
    rep = verify_kernel_inequality(K1, seed=11, n_samples=2000)
    assert rep.violations == 0
    assert rep.min_gap > 0


def test_verify_inequality_m2_quick():
    k2 = fractional_kernel(0.5, 2)
    rep = verify_kernel_inequality(k2, seed=3, n_samples=200)
    assert rep.violations == 0
    assert rep.n_unconverged == 0


def test_verify_inequality_detects_concave_interval_kernel():
    # h(tau) = 1/(1+tau^2) has an interval of concavity; the necessary
    # condition fails and sampled violations appear among small-radius pairs
    r = np.geomspace(1e-6, 1e4, 6000)
    k = tabulated_kernel(r, 1.0 / (1.0 + r ** 4), gamma=0.5, m=1)
    rep = verify_kernel_inequality(k, seed=2, n_samples=4000, r_range=(5e-3, 5.0))
    assert rep.violations > 0


def test_verify_inequality_needs_samples():
    with pytest.raises(DomainError):
        verify_kernel_inequality(K1, seed=0, n_samples=0)


# --- closed hypergeometric form ------------------------------------------------

def test_f2_argument_bound_example():
    x, y = f2_arguments((1, 0.5), (2, 0.8))
    assert x + y == pytest.approx(9.6 / 10.69, abs=1e-4)
    assert x + y < 1


def test_prefactor_duplication_identity():
    # 2^(2m-4) c_m^2 Gamma(m/2)^4 / Gamma(m)^2
    #   == pi^m Gamma(m/2)^2 / (Gamma((m-1)/2)^2 Gamma((m+1)/2)^2)
    for m in (2, 3, 4, 5):
        c_m = 2.0 * math.pi ** ((m - 1) / 2.0) / math.gamma((m - 1) / 2.0)
        lhs = 2.0 ** (2 * m - 4) * c_m ** 2 * math.gamma(m / 2.0) ** 4 / math.gamma(m) ** 2
        rhs = (math.pi ** m * math.gamma(m / 2.0) ** 2
               / (math.gamma((m - 1) / 2.0) ** 2 * math.gamma((m + 1) / 2.0) ** 2))
        assert lhs == pytest.approx(rhs, rel=1e-12)
        # the series prefactor carries the substitution Jacobians (4x)
        assert appell_prefactor(0.5, m) == pytest.approx(4.0 * rhs, rel=1e-12)


def test_appell_agrees_with_quadrature():
    k2 = fractional_kernel(0.5, 2)
    quad, conv = j_kernel_adaptive(k2, (1, 0.5), (2, 0.8), rtol=1e-10)
    assert conv
    series = j_kernel_appell(0.5, 2, (1, 0.5), (2, 0.8), series_tol=1e-12)
    assert series == pytest.approx(quad, rel=1e-6)


def test_appell_agrees_on_random_sample():
    rng = np.random.default_rng(12)
    k2 = fractional_kernel(0.25, 2)
    n = 0
    while n < 25:
        (s,), (t,) = sample_outer_orbits(rng, 1)
        (sig,), (tau,) = sample_outer_orbits(rng, 1)
        x, y = f2_arguments((s, t), (sig, tau))
        if x + y > 0.95:
            continue
        quad, conv = j_kernel_adaptive(k2, (s, t), (sig, tau), rtol=1e-10)
        if not conv:
            continue
        series = j_kernel_appell(0.25, 2, (s, t), (sig, tau), series_tol=1e-12)
        assert series == pytest.approx(quad, rel=1e-6)
        n += 1


def test_appell_domain_errors():
    with pytest.raises(DomainError):
        j_kernel_appell(0.5, 1, (1, 0.5), (2, 0.8))
    with pytest.raises(DomainError):
        appell_f2(2.5, 1.0, 1.0, 2.0, 2.0, 0.7, 0.4)  # x + y >= 1
    with pytest.raises(ConvergenceError):
        appell_f2(2.5, 1.0, 1.0, 2.0, 2.0, 0.55, 0.449999, max_terms=5)


# --- zero-order coefficient -----------------------------------------------------

def test_zero_order_bound_sandwich():
    probes = [(1.5, 0.5), (2.0, 0.4), (3.0, 1.0), (4.0, 1.5), (2.5, 2.0), (5.0, 0.5)]
    ratios = []
    for p in probes:
        z = zero_order_coefficient(K1, p, R_out=50.0)
        d = cone_distance(p)
        ratios.append(z * d)  # 2 gamma = 1
    c1, c2 = min(ratios), max(ratios)
    assert 0 < c1 <= c2 < 10.0 * c1
    z31 = zero_order_coefficient(K1, (3, 1), R_out=50.0)
    d = cone_distance((3, 1))
    assert c1 / d <= z31 + 1e-12 and z31 <= c2 / d + 1e-12


def test_zero_order_monotone_toward_cone():
    z_near = zero_order_coefficient(K1, (2.5, 2.4), R_out=50.0)
    z_far = zero_order_coefficient(K1, (3, 1), R_out=50.0)
    assert z_near > z_far


def test_zero_order_tail_consistency():
    z50 = zero_order_coefficient(K1, (3, 1), R_out=50.0)
    z100 = zero_order_coefficient(K1, (3, 1), R_out=100.0)
    assert abs(z100 - z50) / z50 < 0.01


def test_zero_order_domain_errors():
    with pytest.raises(DomainError):
        zero_order_coefficient(K1, (2, 2), R_out=50.0)
    with pytest.raises(DomainError):
        zero_order_coefficient(K1, (1, 2), R_out=50.0)


def test_exterior_tail_closed_form_at_origin():
    # int_{|y|>R} |y|^(-2-2 gamma) dy = pi R^(-2 gamma) / gamma in dimension 2
    for gamma, R in ((0.5, 50.0), (0.25, 20.0), (0.75, 35.0)):
        k = fractional_kernel(gamma, 1)
        val = float(exterior_tail_coefficient(k, 1e-9, 0.0, R))
        assert val == pytest.approx(math.pi * R ** (-2 * gamma) / gamma, rel=1e-9)
