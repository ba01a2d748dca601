"""Closed-form results of the small-eps two-scale expansion.

At leading order the swimmer rotates like a flagellum-free ellipse with an
effective shape ``b``; its orientation density is stationary under that
modified Jeffery flow; the flagellum is straight and carries the stresses
``Lambda0``/``N0``; the first correction ``theta1`` is a quartic in ``s``.
Orientation averages of the resulting Kirkwood stress give the two
coefficients ``Z_elastic`` and ``Z_prop`` that enter the viscosity formula.

Everything here is nondimensional unless a function name says otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq

from .core import ParameterError, PhysicalParams, write_csv


class ShapeB(NamedTuple):
    exact: float
    simplified: float


def effective_shape_b(beta: float, r: float, k_r: float = 0.5, alpha: float = 2.0) -> ShapeB:
    """Effective Jeffery shape parameter of a body with a rigid flagellum.

    Returns the exact value and the simplified ``r*beta/(1+2r)``, which
    coincides with the exact one when ``alpha=2`` and ``k_r=1/2``.
    """
    sigma = 1.0 + 1.5 * alpha
    den = 2 * r * sigma * k_r + 2 * r + 3 * alpha * k_r
    if not den > 0:
        raise ParameterError("r", r, "effective-shape denominator is not positive")
    exact = beta * r * (2 * sigma * k_r + 2 - 3 * alpha * k_r) / den
    return ShapeB(exact, r * beta / (1 + 2 * r))


def _q(b: float) -> float:
    c = 1.0 - 2.0 * b
    return math.sqrt(max(1.0 - c * c, 0.0))


@dataclass(frozen=True)
class AsymptoticCoeffs:
    """Orientation-independent constants of the leading-order solution.

    ``alpha_b`` multiplies ``cos(2 theta0)`` in the fourth derivative of
    ``theta1``; ``sigma1`` is the matching cubic coefficient.
    """

    b: float
    q: float
    sigma1: float
    sigma2: float
    alpha_b: float
    beta: float
    r: float
    k_r: float
    alpha: float

    @property
    def sigma(self) -> float:
        return 1.0 + 1.5 * self.alpha


def asymptotic_coeffs(beta: float, r: float, k_r: float = 0.5, alpha: float = 2.0,
                      b: float | None = None) -> AsymptoticCoeffs:
    """Build :class:`AsymptoticCoeffs`; ``b`` defaults to the exact effective shape."""
    if b is None:
        b = effective_shape_b(beta, r, k_r, alpha).exact
    if not 0 < b <= 0.5:
        raise ParameterError("b", b, "must lie in (0, 1/2]")
    sigma = 1.0 + 1.5 * alpha
    sigma1 = (alpha * b * (sigma * k_r + 2) + alpha * beta * r) / (2 * (sigma * k_r + 1))
    sigma2 = (k_r + alpha * r + 2) / (4 * (1 + k_r))
    return AsymptoticCoeffs(b, _q(b), sigma1, sigma2, alpha * b, beta, r, k_r, alpha)


def coeffs_from_params(p: PhysicalParams) -> AsymptoticCoeffs:
    return asymptotic_coeffs(p.body_beta, p.r, p.drag_ratio, p.alpha)


def jeffery_rate(theta0, b: float):
    """Angular velocity of the modified Jeffery equation."""
    s = np.sin(theta0)
    c = np.cos(theta0)
    return -(1.0 - b) * s * s - b * c * c


def jeffery_period(b: float) -> float:
    """Full-turn period ``2 pi / sqrt(b (1-b))`` of the modified Jeffery orbit."""
    return 2.0 * math.pi / math.sqrt(b * (1.0 - b))


def jeffery_angle(t, b: float, theta_init: float = 0.0):
    """Closed-form solution of the modified Jeffery equation.

    ``tan(theta) = sqrt(b/(1-b)) tan(w t + phi)`` with ``w = sqrt(b(1-b))``;
    the branch is unwrapped so that the angle decreases continuously.
    """
    w = math.sqrt(b * (1.0 - b))
    k = math.sqrt(b / (1.0 - b))
    # phase of the initial angle, measured in the decreasing direction
    turns = math.floor((theta_init + math.pi / 2) / math.pi)
    th = theta_init - turns * math.pi
    phi = math.atan(math.tan(th) / k)
    psi = phi - w * np.asarray(t, dtype=float)
    n = np.floor((psi + math.pi / 2) / math.pi)
    return np.arctan(k * np.tan(psi - n * math.pi)) + n * math.pi + turns * math.pi


def stationary_distribution(b: float) -> Callable[[np.ndarray], np.ndarray]:
    """Stationary orientation density on ``[0, 2 pi)`` for effective shape ``b``."""
    if not 0 < b <= 0.5:
        raise ParameterError("b", b, "stationary density needs b in (0, 1/2]")
    c = 1.0 - 2.0 * b
    q = _q(b)

    def density(theta0):
        return q / (2 * math.pi) / (1.0 - c * np.cos(2 * np.asarray(theta0)))

    return density


def orientation_moments(b: float) -> tuple[float, float]:
    """Exact averages of ``cos 2theta`` and ``cos^2 2theta`` under the stationary density."""
    c = 1.0 - 2.0 * b
    q = _q(b)
    if abs(c) < 1e-8:
        # series in c; both vanish for the disc
        return c / 2.0, 0.5 + c * c / 8.0
    return (1.0 - q) / c, (1.0 - q) / (c * c)


def leading_stress(s, theta0, coeffs: AsymptoticCoeffs, f_p: float = 0.0):
    """Leading-order tangential and normal stress on a straight flagellum (nondim)."""
    s = np.asarray(s, dtype=float)
    u = s - 1.0
    lam = (-0.25 * u * u - coeffs.sigma2 * u) * np.sin(2 * theta0) - f_p * u / (1 + coeffs.k_r)
    n = -(0.5 * coeffs.alpha_b * u * u + coeffs.sigma1 * u) * np.cos(2 * theta0)
    return lam, n


def leading_stress_dimensional(s, theta0, p: PhysicalParams, coeffs: AsymptoticCoeffs | None = None):
    """Dimensional ``(Lambda0, N0)`` in newtons at arclength ``s`` in metres."""
    coeffs = coeffs or coeffs_from_params(p)
    s = np.asarray(s, dtype=float)
    L = p.L
    u = s - L
    scale = p.zeta_f * p.gamma_dot
    lam = -scale * (0.25 * u * u + L * coeffs.sigma2 * u) * np.sin(2 * theta0) \
        - p.F_p * u / (1 + coeffs.k_r)
    n = -scale * (0.5 * coeffs.alpha_b * u * u + L * coeffs.sigma1 * u) * np.cos(2 * theta0)
    return lam, n


def shape_profile(s, coeffs: AsymptoticCoeffs):
    """Orientation-free profile ``p(s)`` with ``theta1 = p(s) cos 2theta0``."""
    u = np.asarray(s, dtype=float) - 1.0
    return coeffs.alpha_b * (u**4 - 1.0) / 24.0 + coeffs.sigma1 * (u**3 + 1.0) / 6.0


def first_order_correction(s, theta0, coeffs: AsymptoticCoeffs):
    """First-order flagellum deflection ``theta1(s)``."""
    return shape_profile(s, coeffs) * np.cos(2 * theta0)


def first_order_shape(s, theta0, coeffs: AsymptoticCoeffs, eps: float):
    """Tangent angle ``theta0 + eps * theta1(s)`` of the weakly bent flagellum."""
    return theta0 + eps * first_order_correction(s, theta0, coeffs)


def z_elastic(beta: float, r: float, k_r: float = 0.5, alpha: float = 2.0,
              zeta_f: float = 1.0) -> float:
    """Orientation-averaged elastic stress coefficient.

    Equals ``zeta_f * < int_0^1 (Lambda0 sin 2theta0 + N0 cos 2theta0) ds >``
    over the stationary density; it carries ``zeta_f`` so the viscosity term
    reads ``Phi L^3 Z_elastic / eta0``.
    """
    c = asymptotic_coeffs(beta, r, k_r, alpha)
    _, c2 = orientation_moments(c.b)
    return zeta_f * ((c.sigma2 / 2 - 1.0 / 12) * (1.0 - c2) + (c.sigma1 / 2 - c.alpha_b / 6) * c2)


def z_prop(beta: float, r: float, k_r: float = 0.5, alpha: float = 2.0) -> float:
    """Orientation-averaged propulsion stress coefficient.

    Half the average of ``cos^2(2theta0) * int_0^1 p(s) ds``, i.e. the
    symmetrized off-diagonal propulsion stress per unit ``f_p * eps``.
    """
    c = asymptotic_coeffs(beta, r, k_r, alpha)
    _, c2 = orientation_moments(c.b)
    return 0.5 * (c.sigma1 / 8 - c.alpha_b / 30) * c2


def z_elastic_printed(beta: float, r: float, zeta_f: float = 1.0) -> float:
    """Closed form as typeset in the source derivation (kept for comparison only)."""
    a = math.sqrt(r * beta)
    w = math.sqrt(1 + 2 * r - r * beta)
    brace = (2 * r + 5) * w * (2 * r + 1 - 2 * a * w) + 3 * a * (3 * r + 2) * (2 * r + 1 - 2 * a)
    return zeta_f * r * beta / (12 * (1 + 2 * r - 2 * r * beta)) * brace


def z_prop_printed(beta: float, r: float) -> float:
    """Closed form as typeset in the source derivation (kept for comparison only)."""
    q = _q(r * beta / (1 + 2 * r))
    return beta * r * (17 + 10 * r) * (2 * r + 1 - q * math.sqrt(2 * r + 1)) \
        / (120 * (2 * r + 1 - beta * r) ** 2)


@dataclass(frozen=True)
class AsymptoticViscosity:
    eta_elastic: float
    eta_prop: float
    total: float
    z_elastic: float
    z_prop: float
    convention: str


# Weight of the elastic term relative to ``Phi L^3 Z_elastic / eta0``.
# "kirkwood": the 1/2 of the symmetrized off-diagonal applied to both parts,
#   identical to what rheology computes from simulations.
# "supplement": the elastic average taken without the 1/2, propulsion with it.
# "table": elastic weight under which the tabulated asymptotic thresholds
#   are recovered.
CONVENTIONS = {"kirkwood": 0.5, "supplement": 1.0, "table": 2.0}


def effective_viscosity_asymptotic(p: PhysicalParams, convention: str = "kirkwood") -> AsymptoticViscosity:
    """Relative viscosity change of a dilute suspension at leading order.

    ``eta_prop = -Phi L^6 zeta_f F_p Z_prop / (eta0 K_b)``, which is the
    ``eps F_p L^2 / gamma_dot`` form with the shear rate cancelled, so the
    result is finite for a fluid at rest.
    """
    try:
        w = CONVENTIONS[convention]
    except KeyError:
        raise ValueError(f"unknown convention {convention!r}") from None
    k_r = p.drag_ratio
    ze = z_elastic(p.body_beta, p.r, k_r, p.alpha, p.zeta_f)
    zp = z_prop(p.body_beta, p.r, k_r, p.alpha)
    el = w * p.Phi * p.L**3 * ze / p.eta0
    pr = -p.Phi * p.L**6 * p.zeta_f * p.F_p * zp / (p.eta0 * p.K_b)
    return AsymptoticViscosity(el, pr, el + pr, ze, zp, convention)


class ThresholdNotFound(ValueError):
    """Raised when the viscosity change does not cross the target in range."""


@dataclass(frozen=True)
class Threshold:
    L: float
    r: float
    eps: float
    target: float
    vary: str
    decreasing_side: str  # "above" if the change is below target for larger L

    @property
    def value(self) -> float:
        return getattr(self, self.vary)


def viscosity_decrease_threshold(p: PhysicalParams, vary: str = "L", target: float = 0.0,
                                 L_range: tuple[float, float] = (2e-6, 2e-4),
                                 convention: str = "kirkwood", rtol: float = 1e-10,
                                 change: Callable[[PhysicalParams], float] | None = None,
                                 scan_points: int = 64) -> Threshold:
    """Flagellum length where the relative viscosity change crosses ``target``.

    The body size ``ell`` is held fixed, so ``L``, ``r = ell/L`` and ``eps``
    are three labels of the same root.  ``change`` overrides the response
    function (used by the numeric pipeline).
    """
    if vary not in ("L", "r", "eps"):
        raise ValueError(f"vary must be L, r or eps, not {vary!r}")
    if change is None:
        def change(q):
            return effective_viscosity_asymptotic(q, convention).total

    def f(L):
        return change(p.replace(L=L)) - target

    lo, hi = L_range
    grid = np.geomspace(lo, hi, scan_points)
    vals = [f(L) for L in grid]
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            root = grid[i]
            break
        if np.sign(vals[i]) != np.sign(vals[i + 1]):
            root = brentq(f, grid[i], grid[i + 1], rtol=rtol, xtol=1e-20)
            side = "above" if vals[i + 1] < 0 else "below"
            break
    else:
        raise ThresholdNotFound(f"no threshold in range L in [{lo:g}, {hi:g}] m")
    if vals[i] == 0.0:
        side = "above" if vals[min(i + 1, len(vals) - 1)] < 0 else "below"
    q = p.replace(L=root)
    return Threshold(root, q.r, q.eps(), target, vary, side)


TABLE_COLUMNS = ["beta", "r", "L", "K_b", "eta0", "F_p", "Phi", "k_r",
                 "Z_elastic", "Z_prop", "eta_elastic", "eta_prop", "total"]


def batch_evaluate(base: PhysicalParams, convention: str = "kirkwood", **axes) -> list[list[float]]:
    """Evaluate the asymptotic viscosity on the outer product of ``axes``.

    ``axes`` maps field names of :class:`PhysicalParams` (or ``r``, which
    sets ``L = ell/r``) to 1-D sequences.  Rows follow :data:`TABLE_COLUMNS`.
    """
    names = list(axes)
    rows = []
    for combo in np.array(np.meshgrid(*[np.asarray(axes[n], float) for n in names],
                                      indexing="ij")).reshape(len(names), -1).T:
        kw = dict(zip(names, (float(v) for v in combo)))
        if "r" in kw:
            kw["L"] = base.ell / kw.pop("r") if "ell" not in kw else kw["ell"] / kw.pop("r")
        q = base.replace(**kw)
        v = effective_viscosity_asymptotic(q, convention)
        rows.append([q.body_beta, q.r, q.L, q.K_b, q.eta0, q.F_p, q.Phi, q.drag_ratio,
                     v.z_elastic, v.z_prop, v.eta_elastic, v.eta_prop, v.total])
    return rows


def write_batch_csv(path, rows) -> None:
    write_csv(path, TABLE_COLUMNS, rows)
