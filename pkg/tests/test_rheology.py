import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfs.asymptotics import (asymptotic_coeffs, effective_viscosity_asymptotic, first_order_shape,
                              jeffery_period, jeffery_rate, leading_stress, orientation_moments,
                              stationary_distribution, z_elastic)
from mmfs.core import BackgroundFlow, DimensionlessParams, PhysicalParams, SwimmerState, nondimensionalize
from mmfs.dynamics import FlagellumSolver, SolverConfig, initial_state
from mmfs.rheology import (StressTensor2, ViscosityReport, effective_viscosity_numeric, kirkwood_stress,
                           liouville_residual, symmetric_offdiagonal, viscosity_contribution)

from .oracles import density_on_grid, effective_b, orientation_average

D = DimensionlessParams(eps=0.05, f_p=2.0, k_r=0.75, r=0.4167, beta=0.0162)


def state_from(theta, theta0, lam=None, nst=None):
    n = len(theta)
    return SwimmerState(theta0, (0.0, 0.0), np.asarray(theta, float),
                        np.zeros(n) if lam is None else lam, np.zeros(n) if nst is None else nst)


# -- Kirkwood stress ---------------------------------------------------------------
def test_unloaded_straight_flagellum_has_no_stress():
    p = D.replace(f_p=0.0)
    s = kirkwood_stress(state_from(np.full(21, 0.4), 0.4), p)
    assert np.array_equal(s.sigma, np.zeros((2, 2)))


def test_parts_add_up():
    st_ = initial_state(D, 0.6, 0.05, 41)
    s = kirkwood_stress(st_, D)
    assert np.array_equal(s.sigma, s.propulsion + s.elastic)
    assert np.allclose((s + s).sigma, s.scaled(2.0).sigma)


def test_fast_offdiagonal_matches_tensor():
    st_ = initial_state(D, 1.1, 0.2, 41)
    s = kirkwood_stress(st_, D)
    sp_, se = symmetric_offdiagonal(st_, D)
    assert sp_ == pytest.approx(s.propulsion[0, 1] + s.propulsion[1, 0], rel=1e-12)
    assert se == pytest.approx(s.elastic[0, 1] + s.elastic[1, 0], rel=1e-12)


def test_straight_propulsion_moment():
    # -f_p int tau_k tau_l s ds = -(f_p / 2) tau tau^T for a straight filament
    th0 = 0.3
    s = kirkwood_stress(state_from(np.full(101, th0), th0), D)
    tau = np.array([math.cos(th0), math.sin(th0)])
    assert np.allclose(s.propulsion, -0.5 * D.f_p * np.outer(tau, tau), atol=1e-14)


def test_elastic_average_matches_z_elastic():
    c = asymptotic_coeffs(D.beta, D.r, D.k_r, D.alpha)
    th, P = density_on_grid(c.b, 1024)
    s = np.linspace(0, 1, 1601)  # trapezoid error in s is O(h^2)
    vals = []
    for t in th:
        lam, nn = leading_stress(s, t, c)
        sig = kirkwood_stress(state_from(np.full(len(s), t), t, lam, nn), D.replace(f_p=0.0))
        vals.append(0.5 * (sig.elastic[0, 1] + sig.elastic[1, 0]))
    assert orientation_average(np.array(vals), P) == pytest.approx(0.5 * z_elastic(D.beta, D.r, D.k_r), rel=1e-6)


def test_bent_flagellum_stress_is_not_symmetric():
    c = asymptotic_coeffs(D.beta, D.r, D.k_r, D.alpha)
    s = np.linspace(0, 1, 201)
    th = first_order_shape(s, 0.0, c, 0.05)
    lam, nn = leading_stress(s, 0.0, c, D.f_p)
    sig = kirkwood_stress(state_from(th, 0.0, lam, nn), D).sigma
    assert abs(sig[0, 1] - sig[1, 0]) > 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.0, 0.3))
def test_contribution_is_pi_periodic(theta0, amp):
    s = np.linspace(0, 1, 41)
    bend = amp * np.sin(0.5 * np.pi * s)
    a = symmetric_offdiagonal(state_from(theta0 + bend, theta0, np.linspace(1, 0, 41), -bend), D)
    b = symmetric_offdiagonal(state_from(theta0 + np.pi + bend, theta0 + np.pi, np.linspace(1, 0, 41), -bend), D)
    assert np.allclose(a, b, atol=1e-12)


# -- viscosity contribution ----------------------------------------------------------------
def test_contribution_examples():
    assert viscosity_contribution(StressTensor2.zero(), 0.1).total == 0.0
    diag = StressTensor2(np.diag([1.0, 2.0]), np.diag([3.0, -1.0]))
    assert viscosity_contribution(diag, 0.1).total == 0.0
    g = 0.1
    unit = StressTensor2(np.array([[0.0, g], [g, 0.0]]), np.zeros((2, 2)))
    assert viscosity_contribution(unit, g).total == pytest.approx(1.0)


def test_contribution_rejects_zero_shear():
    with pytest.raises(ValueError):
        viscosity_contribution(StressTensor2.zero(), 0.0)


def test_report_total_and_json():
    rep = ViscosityReport(-0.25, 0.125, -0.125, (1.0, 2.0), "numeric")
    assert rep.total == rep.eta_propulsion + rep.eta_elastic
    assert '"window": [\n    1.0,\n    2.0\n  ]' in rep.to_json()


# -- Liouville -------------------------------------------------------------------------------
@pytest.mark.parametrize("b", [0.00365, 0.05, 0.3])
def test_stationary_density_is_stationary(b):
    assert liouville_residual(lambda t: jeffery_rate(t, b), stationary_distribution(b)) < 1e-10


def test_uniform_density_not_stationary_for_elongated_body():
    uniform = lambda t: np.full_like(t, 1 / (2 * np.pi))  # noqa: E731
    assert liouville_residual(lambda t: jeffery_rate(t, 0.1), uniform) > 1e-3


def test_small_departure_from_stationarity_is_detected():
    P = stationary_distribution(0.00365)
    perturbed = lambda t: P(t) * (1 + 1e-8 * np.cos(2 * t))  # noqa: E731
    assert liouville_residual(lambda t: jeffery_rate(t, 0.00365), perturbed) > 1e-10


def test_round_body_uniform_density():
    uniform = lambda t: np.full_like(t, 1 / (2 * np.pi))  # noqa: E731
    assert liouville_residual(lambda t: jeffery_rate(t, 0.5), uniform) < 1e-14


# -- numeric viscosity ------------------------------------------------------------------------
def small_eps_params(F_p):
    L = 12e-6
    return PhysicalParams(L=L, F_p=F_p, K_b=L**4 * 0.1 * 1e-3 / 0.01)


@pytest.fixture(scope="module")
def passive_report():
    return effective_viscosity_numeric(small_eps_params(0.0), config=SolverConfig(dt=2e-3, n=41))


@pytest.fixture(scope="module")
def active_report():
    return effective_viscosity_numeric(small_eps_params(1e-7), config=SolverConfig(dt=2e-3, n=61))


def test_passive_numeric_viscosity(passive_report):
    assert passive_report.eta_propulsion == 0.0
    assert passive_report.total >= 0.0
    assert passive_report.averaging == "period"
    assert passive_report.total == passive_report.eta_propulsion + passive_report.eta_elastic


def test_passive_numeric_matches_asymptotics(passive_report):
    a = effective_viscosity_asymptotic(small_eps_params(0.0), "kirkwood").total
    assert passive_report.total == pytest.approx(a, rel=0.01)


def test_numeric_vs_asymptotic_small_eps(active_report):
    a = effective_viscosity_asymptotic(small_eps_params(1e-7), "kirkwood").total
    assert abs(active_report.total - a) <= 0.15 * abs(a) + 1e-4


def test_numeric_needs_shear():
    with pytest.raises(ValueError):
        effective_viscosity_numeric(PhysicalParams(gamma_dot=0.0))


def test_doubling_density_doubles_change(passive_report):
    p = small_eps_params(0.0)
    rep2 = effective_viscosity_numeric(p.replace(Phi=2 * p.Phi), config=SolverConfig(dt=2e-3, n=41))
    assert rep2.total == 2 * passive_report.total


def test_time_average_equals_ensemble_average():
    d = nondimensionalize(small_eps_params(0.0))
    b = effective_b(d.beta, d.r, d.k_r)
    solver = FlagellumSolver(initial_state(d, 0.0, 0.0, 41), d, BackgroundFlow(), SolverConfig(dt=2e-3, n=41))
    # discard the first quarter turn, then average cos^2 and sin^2 of 2 theta0 over half a turn
    while solver.theta0 > -math.pi / 2:
        solver.step()
    t0, th0 = solver.t, solver.theta0
    ts, c2 = [t0], [math.cos(2 * th0) ** 2]
    while solver.theta0 > th0 - math.pi:
        solver.step()
        ts.append(solver.t)
        c2.append(math.cos(2 * solver.theta0) ** 2)
    T = ts[-1] - ts[0]
    avg = np.trapezoid(c2, ts) / T
    _, m2 = orientation_moments(b)
    assert avg == pytest.approx(m2, rel=0.01)
    assert 2 * T == pytest.approx(jeffery_period(b), rel=0.01)
