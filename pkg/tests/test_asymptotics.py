import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfs.asymptotics import (CONVENTIONS, TABLE_COLUMNS, ThresholdNotFound, asymptotic_coeffs, batch_evaluate,
                              effective_shape_b, effective_viscosity_asymptotic, first_order_correction,
                              first_order_shape, jeffery_angle, jeffery_period, jeffery_rate, leading_stress,
                              orientation_moments, stationary_distribution, viscosity_decrease_threshold,
                              z_elastic, z_prop)
from mmfs.core import ParameterError, PhysicalParams, table2_params

from .oracles import (density_on_grid, jeffery_ode_angle, loglog_slope, orientation_average,
                      z_elastic_quadrature, z_prop_quadrature)

betas = st.floats(0.005, 0.5)
radii = st.floats(0.05, 2.0)


# -- effective shape ---------------------------------------------------------------
def test_simplified_shape_example():
    assert effective_shape_b(0.0162, 0.41).simplified == pytest.approx(0.003650, rel=1e-3)


def test_needle_body_has_zero_shape():
    b = effective_shape_b(0.0, 0.41, 0.65)
    assert b.exact == 0.0 and b.simplified == 0.0


@settings(max_examples=60, deadline=None)
@given(betas, radii)
def test_exact_shape_reduces_at_half_drag_ratio(beta, r):
    b = effective_shape_b(beta, r, k_r=0.5, alpha=2.0)
    assert b.exact == pytest.approx(b.simplified, rel=1e-13)


def test_exact_and_simplified_close_for_table_values():
    b = effective_shape_b(0.0162, 0.41, k_r=0.65)
    assert abs(b.exact - b.simplified) / b.simplified < 0.15


def test_degenerate_shape_rejected():
    with pytest.raises(ParameterError):
        asymptotic_coeffs(0.1, 0.4, b=0.0)


# -- stationary density -------------------------------------------------------------
def test_round_body_density_is_uniform():
    P = stationary_distribution(0.5)
    th = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(P(th), 1 / (2 * np.pi), rtol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-4, 0.5))
def test_density_ratio(b):
    # the body lingers where it turns slowest, near theta0 = 0
    P = stationary_distribution(b)
    assert P(np.pi / 2) / P(0.0) == pytest.approx(b / (1 - b), rel=1e-12)


@pytest.mark.parametrize("b", [1e-3, 0.00365, 0.05, 0.3, 0.5])
def test_density_normalized(b):
    th = 2 * np.pi * np.arange(8192) / 8192
    assert abs(np.sum(stationary_distribution(b)(th)) * 2 * np.pi / 8192 - 1.0) < 1e-12


def test_q_example():
    assert asymptotic_coeffs(0.0162, 0.41, b=0.003650).q == pytest.approx(0.12059, abs=2e-5)


def test_density_needs_positive_shape():
    with pytest.raises(ParameterError):
        stationary_distribution(0.0)


@pytest.mark.parametrize("b", [0.002, 0.05, 0.45])
def test_orientation_moments(b):
    th, P = density_on_grid(b)
    m1, m2 = orientation_moments(b)
    assert m1 == pytest.approx(orientation_average(np.cos(2 * th), P), rel=1e-12)
    assert m2 == pytest.approx(orientation_average(np.cos(2 * th) ** 2, P), rel=1e-12)


@pytest.mark.parametrize("b", [0.0037, 0.1, 0.5])
def test_jeffery_angle_matches_ode(b):
    t = np.linspace(0, 1.3 * jeffery_period(b), 400)
    ref = jeffery_ode_angle(t, b, 0.3)
    assert np.max(np.abs(jeffery_angle(t, b, 0.3) - ref)) < 1e-8


def test_jeffery_rate_is_modified_equation():
    assert jeffery_rate(0.0, 0.2) == pytest.approx(-0.2)
    assert jeffery_rate(np.pi / 2, 0.2) == pytest.approx(-0.8)


# -- leading-order stresses and first-order shape -------------------------------------------
def test_free_end_stresses_vanish():
    c = asymptotic_coeffs(0.0162, 0.41, 0.65)
    lam, n = leading_stress(1.0, 0.7, c, f_p=3.0)
    assert lam == 0.0 and n == 0.0


def test_no_normal_stress_at_diagonal():
    c = asymptotic_coeffs(0.0162, 0.41, 0.65)
    s = np.linspace(0, 1, 11)
    _, n = leading_stress(s, np.pi / 4, c)
    assert np.allclose(n, 0.0, atol=1e-16)


def test_normal_stress_at_junction_example():
    c = asymptotic_coeffs(0.0162, 0.41, 0.65, 2.0, b=0.003650)
    assert c.sigma1 == pytest.approx(0.006508, abs=1e-6)
    _, n = leading_stress(0.0, 0.0, c)
    assert n == pytest.approx(0.002859, abs=5e-7)


def test_propulsion_part_of_tension():
    c = asymptotic_coeffs(0.1, 0.5, 0.75)
    s = np.linspace(0, 1, 11)
    lam1, _ = leading_stress(s, 0.3, c, f_p=2.0)
    lam0, _ = leading_stress(s, 0.3, c, f_p=0.0)
    assert np.allclose(lam1 - lam0, -2.0 * (s - 1) / 1.75)


def test_first_order_shape_examples():
    c = asymptotic_coeffs(0.0162, 0.41, 0.65)
    assert first_order_shape(0.0, 1.1, c, 0.05) == 1.1
    s = np.linspace(0, 1, 11)
    assert np.allclose(first_order_shape(s, np.pi / 4, c, 0.05), np.pi / 4, atol=1e-17)


@pytest.mark.parametrize("beta,r,k_r", [(0.0162, 0.41, 0.65), (0.2, 1.3, 0.5), (0.5, 0.1, 2.0)])
def test_first_order_boundary_conditions_symbolically(beta, r, k_r):
    c = asymptotic_coeffs(beta, r, k_r)
    th0 = 0.37
    s = sp.symbols("s")
    cos2 = sp.cos(2 * sp.Float(th0, 30))
    chi = sp.Float(c.alpha_b, 30) * cos2
    C1 = sp.Float(c.sigma1, 30) * cos2
    theta1 = chi * ((s - 1) ** 4 - 1) / 24 + C1 * ((s - 1) ** 3 + 1) / 6
    # agrees with the implementation on the grid
    grid = np.linspace(0, 1, 9)
    assert np.allclose([float(theta1.subs(s, x)) for x in grid], first_order_correction(grid, th0, c), atol=1e-15)
    d = [sp.diff(theta1, s, k) for k in range(5)]
    sigma = 1 + sp.Rational(3, 2) * c.alpha
    junction = d[3].subs(s, 0) - sigma * k_r * d[2].subs(s, 0) - c.alpha * beta * r / 2 * cos2
    residuals = [d[0].subs(s, 0), d[1].subs(s, 1), d[2].subs(s, 1), d[4] - chi, junction]
    assert max(abs(float(sp.N(x))) for x in residuals) < 1e-12


# -- Z coefficients ------------------------------------------------------------------
@pytest.mark.parametrize("beta", np.linspace(0.01, 0.5, 6))
@pytest.mark.parametrize("r", [0.05, 0.2, 0.7, 2.0])
def test_z_coefficients_positive(beta, r):
    assert z_elastic(beta, r) > 0
    assert z_prop(beta, r) > 0


@settings(max_examples=15, deadline=None)
@given(betas, radii, st.floats(0.2, 3.0))
def test_z_coefficients_match_quadrature(beta, r, k_r):
    assert z_elastic(beta, r, k_r) == pytest.approx(z_elastic_quadrature(beta, r, k_r), rel=1e-6)
    assert z_prop(beta, r, k_r) == pytest.approx(z_prop_quadrature(beta, r, k_r), rel=1e-6)


def test_z_vanish_for_needle():
    assert z_prop(1e-10, 0.4) < 1e-8
    assert z_elastic(1e-10, 0.4) < 1e-3 * z_elastic(0.0162, 0.4)


def test_z_elastic_carries_drag():
    assert z_elastic(0.1, 0.5, zeta_f=2e-3) == pytest.approx(2e-3 * z_elastic(0.1, 0.5))


def test_propulsion_scaling_at_fixed_body():
    r = np.geomspace(1e-4, 1e-2, 9)
    # at fixed body length the propulsion term scales as L^6 Z_prop with L = ell / r
    assert loglog_slope(r, r**-6 * np.array([z_prop(0.0162, x) for x in r])) == pytest.approx(-5.0, abs=0.2)


# -- viscosity formula -----------------------------------------------------------------
def test_no_propulsion_no_decrease():
    v = effective_viscosity_asymptotic(PhysicalParams(F_p=0.0))
    assert v.eta_prop == 0.0
    assert v.total >= 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(4e-6, 4e-5), st.floats(0.0, 1e-5), st.floats(1e-24, 1e-21))
def test_term_signs(L, F_p, K_b):
    for conv in CONVENTIONS:
        v = effective_viscosity_asymptotic(PhysicalParams(L=L, F_p=F_p, K_b=K_b), conv)
        assert v.eta_elastic >= 0.0 and v.eta_prop <= 0.0
        assert v.total == v.eta_elastic + v.eta_prop


def test_propulsion_term_finite_at_rest():
    p = PhysicalParams()
    v0 = effective_viscosity_asymptotic(p.replace(gamma_dot=0.0)).eta_prop
    expected = -p.Phi * p.L**6 * p.zeta_f * p.F_p * z_prop(p.body_beta, p.r, p.drag_ratio) / (p.eta0 * p.K_b)
    assert v0 == pytest.approx(expected, rel=1e-14)


def test_unknown_convention():
    with pytest.raises(ValueError):
        effective_viscosity_asymptotic(PhysicalParams(), "other")


# -- thresholds -----------------------------------------------------------------------
TABLE_BASE = dict(k_r=0.5)


def test_threshold_in_r():
    t = viscosity_decrease_threshold(table2_params(**TABLE_BASE), vary="r", convention="table")
    assert t.value == pytest.approx(0.33, abs=0.02)


def test_threshold_in_L_stiffer():
    t = viscosity_decrease_threshold(table2_params(K_b=9e-23, **TABLE_BASE), vary="L", convention="table")
    assert t.value * 1e6 == pytest.approx(22, abs=1)


def test_threshold_ten_percent():
    t = viscosity_decrease_threshold(table2_params(**TABLE_BASE), vary="L", target=-0.1, convention="table")
    assert t.L * 1e6 == pytest.approx(16, abs=1)
    assert t.r == pytest.approx(0.31, abs=0.02)


def test_threshold_labels_are_one_root():
    p = table2_params(**TABLE_BASE)
    t = viscosity_decrease_threshold(p, convention="table")
    assert t.r == pytest.approx(p.ell / t.L)
    assert t.eps == pytest.approx(t.L**4 * p.gamma_dot * p.zeta_f / p.K_b)
    v = effective_viscosity_asymptotic(p.replace(L=t.L), "table").total
    assert abs(v) < 1e-8
    assert t.decreasing_side == "above"


def test_threshold_not_found():
    with pytest.raises(ThresholdNotFound):
        viscosity_decrease_threshold(PhysicalParams(F_p=0.0))


def test_bad_threshold_axis():
    with pytest.raises(ValueError):
        viscosity_decrease_threshold(PhysicalParams(), vary="K_b")


def test_batch_table():
    rows = batch_evaluate(PhysicalParams(), K_b=[3e-23, 9e-23], r=[0.3, 0.5])
    assert len(rows) == 4 and all(len(row) == len(TABLE_COLUMNS) for row in rows)
    assert rows[0][TABLE_COLUMNS.index("L")] == pytest.approx(5e-6 / 0.3)
    for row in rows:
        assert row[-1] == pytest.approx(row[-3] + row[-2])
    assert math.isclose(rows[1][TABLE_COLUMNS.index("r")], 0.5)
