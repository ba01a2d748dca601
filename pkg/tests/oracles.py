"""Independent reference computations used by the tests.

Nothing here calls the closed forms under test.  Orientation averages are
periodic trapezoid sums against the stationary density written out from
its definition, arclength integrals use Gauss-Legendre rules, and the
propulsion coefficient is a central difference in ``eps`` of the full
nonlinear Kirkwood integral of the weakly bent shape.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp

from mmfs.asymptotics import asymptotic_coeffs, effective_shape_b, first_order_shape, leading_stress

N_THETA = 4096
N_GAUSS = 24


def density_on_grid(b: float, n: int = N_THETA):
    """Nodes on [0, 2 pi) and the stationary density ``q / (2 pi (1 - (1-2b) cos 2t))``."""
    th = 2 * math.pi * np.arange(n) / n
    c = 1.0 - 2.0 * b
    q = math.sqrt(1.0 - c * c)
    return th, q / (2 * math.pi) / (1.0 - c * np.cos(2 * th))


def orientation_average(values: np.ndarray, weights: np.ndarray) -> float:
    """Periodic trapezoid rule, normalized by the discrete mass of the density."""
    return float(np.sum(values * weights) / np.sum(weights))


def _gauss(a: float, b: float, n: int = N_GAUSS):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def z_elastic_quadrature(beta: float, r: float, k_r: float = 0.5, alpha: float = 2.0) -> float:
    """``< int_0^1 (Lambda0 sin 2t + N0 cos 2t) ds >`` from the leading-order stresses."""
    c = asymptotic_coeffs(beta, r, k_r, alpha)
    th, P = density_on_grid(c.b)
    s, ws = _gauss(0.0, 1.0)
    t = th[:, None]
    lam, nn = leading_stress(s[None, :], t, c)
    vals = (lam * np.sin(2 * t) + nn * np.cos(2 * t)) @ ws
    return orientation_average(vals, P)


def _propulsion_moment(theta_fn) -> np.ndarray:
    """``int_0^1 (cos th * y + sin th * x) ds`` with ``X(s) = int_0^s tau``, per orientation.

    ``theta_fn(s)`` maps an array of arclengths with a leading singleton
    axis to angles with a leading orientation axis.
    """
    s, ws = _gauss(0.0, 1.0)
    x, wx = np.polynomial.legendre.leggauss(N_GAUSS)
    z = 0.5 * s[:, None] * (x[None, :] + 1.0)  # inner nodes on [0, s_k]
    wz = 0.5 * s[:, None] * wx[None, :]
    tz = theta_fn(z[None])  # (n_theta, n_s, n_z)
    X = np.sum(wz[None] * np.cos(tz), axis=2)
    Y = np.sum(wz[None] * np.sin(tz), axis=2)
    ts = theta_fn(s[None, :])  # (n_theta, n_s)
    return (np.cos(ts) * Y + np.sin(ts) * X) @ ws


def z_prop_quadrature(beta: float, r: float, k_r: float = 0.5, alpha: float = 2.0,
                      h: float = 1e-4) -> float:
    """Symmetrized propulsion stress per unit ``-f_p eps``, averaged over orientations.

    ``Sigma12 + Sigma21 = -f_p int (cos th y + sin th x) ds``; the viscosity
    uses half of it.  The ``eps`` derivative is a central difference, exact
    up to ``O(h^2)`` because the shape is analytic in ``eps``.
    """
    c = asymptotic_coeffs(beta, r, k_r, alpha)
    th, P = density_on_grid(c.b)
    t = th.reshape((-1,) + (1, 1))

    def shape(eps):
        def fn(s):
            tt = t if s.ndim == 3 else t[:, :, 0]
            return first_order_shape(s, tt, c, eps)
        return fn

    vals = (_propulsion_moment(shape(h)) - _propulsion_moment(shape(-h))) / (2 * h)
    return 0.5 * orientation_average(vals, P)


def jeffery_ode_angle(times, b: float, theta_init: float) -> np.ndarray:
    """Modified Jeffery equation integrated numerically (tight tolerances)."""
    def rhs(_, y):
        return [-(1 - b) * math.sin(y[0]) ** 2 - b * math.cos(y[0]) ** 2]

    times = np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (times[0], times[-1]), [theta_init], t_eval=times,
                    rtol=1e-12, atol=1e-12, method="DOP853")
    return sol.y[0]


def effective_b(beta: float, r: float, k_r: float, alpha: float = 2.0) -> float:
    return effective_shape_b(beta, r, k_r, alpha).exact


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x)), np.log(np.abs(np.asarray(y))), 1)[0])
