"""Kirkwood stress of a single swimmer and the resulting suspension viscosity.

Per-swimmer tensors are the un-normalized first moments of the force
density along the flagellum, in units of ``zeta_f * gamma_dot * L**3``;
the number density ``Phi`` supplies the volume normalization when the
viscosity is assembled.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .asymptotics import Threshold, effective_shape_b, jeffery_period, viscosity_decrease_threshold
from .core import BackgroundFlow, DimensionlessParams, PhysicalParams, SwimmerState, nondimensionalize
from .dynamics import FlagellumSolver, SolverConfig, initial_state, reconstruct_positions


@dataclass(frozen=True)
class StressTensor2:
    propulsion: np.ndarray
    elastic: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return self.propulsion + self.elastic

    def __add__(self, other: "StressTensor2") -> "StressTensor2":
        return StressTensor2(self.propulsion + other.propulsion, self.elastic + other.elastic)

    def scaled(self, factor: float) -> "StressTensor2":
        return StressTensor2(self.propulsion * factor, self.elastic * factor)

    @classmethod
    def zero(cls) -> "StressTensor2":
        return cls(np.zeros((2, 2)), np.zeros((2, 2)))


def kirkwood_stress(state: SwimmerState, params: DimensionlessParams) -> StressTensor2:
    """First moment of the flagellum force density about the junction.

    Propulsion: ``-f_p int tau_k (X_l - X_l(0)) ds``.  Elastic:
    ``-int d_s Q_k (X_l - X_l(0)) ds = int Q_k tau_l ds`` with
    ``Q = Lambda tau + N n``; the boundary term vanishes because ``Q(1) = 0``
    and the moment arm is zero at the junction.
    """
    th = np.asarray(state.theta, dtype=float)
    h = 1.0 / (len(th) - 1)
    tau = np.column_stack((np.cos(th), np.sin(th)))
    nrm = np.column_stack((-tau[:, 1], tau[:, 0]))
    X = reconstruct_positions(state)
    arm = X - X[0]
    Q = state.lam[:, None] * tau + state.n_stress[:, None] * nrm
    prop = -params.f_p * np.trapezoid(tau[:, :, None] * arm[:, None, :], dx=h, axis=0)
    el = np.trapezoid(Q[:, :, None] * tau[:, None, :], dx=h, axis=0)
    return StressTensor2(prop, el)


@dataclass(frozen=True)
class Contribution:
    propulsion: float
    elastic: float

    @property
    def total(self) -> float:
        return self.propulsion + self.elastic


def symmetric_offdiagonal(state: SwimmerState, params: DimensionlessParams) -> tuple[float, float]:
    """``(S12 + S21)`` of the propulsion and elastic parts, without building tensors.

    Same quadrature as :func:`kirkwood_stress`; used in the time-averaging loop.
    """
    th = state.theta
    h = 1.0 / (len(th) - 1)
    c, s = np.cos(th), np.sin(th)
    mid = 0.5 * (th[1:] + th[:-1])
    x = np.concatenate(([0.0], np.cumsum(np.cos(mid)))) * h
    y = np.concatenate(([0.0], np.cumsum(np.sin(mid)))) * h
    fp = c * y + s * x
    fe = state.lam * np.sin(2 * th) + state.n_stress * np.cos(2 * th)
    w = np.full(len(th), h)
    w[0] = w[-1] = 0.5 * h
    return -params.f_p * float(w @ fp), float(w @ fe)


def viscosity_contribution(sigma: StressTensor2, gamma_dot: float) -> Contribution:
    """Symmetrized off-diagonal stress over ``2 gamma_dot``, per part."""
    if gamma_dot == 0:
        raise ValueError("gamma_dot = 0: use the asymptotic zero-shear propulsion term instead")

    def sym(m):
        return (m[0, 1] + m[1, 0]) / (2.0 * gamma_dot)

    return Contribution(float(sym(sigma.propulsion)), float(sym(sigma.elastic)))


@dataclass(frozen=True)
class ViscosityReport:
    eta_propulsion: float
    eta_elastic: float
    total: float
    window: tuple[float, float]
    method: str
    periods: int = 0
    params: dict | None = None
    averaging: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        d["window"] = list(self.window)
        return json.dumps(d, sort_keys=True, indent=2)


def _crossings(t: np.ndarray, theta0: np.ndarray, level: float) -> list[float]:
    """Times where the decreasing angle passes ``level - k pi``."""
    u = (theta0 - level) / math.pi
    k = np.floor(u)
    out = []
    for i in np.nonzero(np.diff(k) != 0)[0]:
        target = max(k[i], k[i + 1])
        frac = (u[i] - target) / (u[i] - u[i + 1])
        out.append(float(t[i] + frac * (t[i + 1] - t[i])))
    return out


def _window_mean(t: np.ndarray, y: np.ndarray, a: float, b: float) -> float:
    inside = (t > a) & (t < b)
    tt = np.concatenate(([a], t[inside], [b]))
    yy = np.concatenate(([np.interp(a, t, y)], y[inside], [np.interp(b, t, y)]))
    return float(np.trapezoid(yy, tt) / (b - a))


def time_average_contribution(d: DimensionlessParams, config: SolverConfig | None = None,
                              periods: int = 1, theta_start: float = 0.0,
                              amplitude: float = 0.01, max_time: float | None = None,
                              stationary_tol: float = 1e-6, min_time: float = 20.0):
    """Period-aligned time average of the per-swimmer viscosity integrand.

    The observable is pi-periodic in ``theta0``, so a period is the time
    between successive passages of the body through the vertical.  The
    stretch before the first passage is discarded as transient.  When the
    body stops rotating (a stable aligned state, which strong propulsion can
    produce) the run ends once ``|dtheta0/dt|`` stays below
    ``stationary_tol`` and the final value is reported.  Returns
    ``(propulsion, elastic, window, n_periods, method)`` in units
    of ``zeta_f L**3``.
    """
    cfg = config or SolverConfig(dt=2e-3)
    flow = BackgroundFlow()
    b = effective_shape_b(d.beta, d.r, d.k_r, d.alpha).exact
    if max_time is None:
        max_time = (periods + 2) * jeffery_period(b) / 2.0 * 1.5 + 10.0
    st = initial_state(d, theta_start, amplitude, cfg.n, flow=flow)
    solver = FlagellumSolver(st, d, flow, cfg)
    level = -math.pi / 2
    ts, th, cp, ce = [], [], [], []

    def record():
        sp, se = symmetric_offdiagonal(solver.state(), d)
        ts.append(solver.t)
        th.append(solver.theta0)
        cp.append(0.5 * sp)
        ce.append(0.5 * se)

    record()
    found = 0
    still = 0
    while solver.t < max_time:
        solver.step()
        record()
        if solver.t > min_time and abs(solver.w) < stationary_tol:
            still += 1
            if still * solver.dt > 1.0:
                return cp[-1], ce[-1], (ts[-1], ts[-1]), 0, "stationary"
        else:
            still = 0
        if (math.floor((th[-2] - level) / math.pi) != math.floor((th[-1] - level) / math.pi)):
            found += 1
            if found >= periods + 1:
                break
    t = np.array(ts)
    cross = _crossings(t, np.array(th), level)
    if len(cross) >= periods + 1:
        a, bnd = cross[0], cross[periods]
        method = "period"
        n = periods
    else:
        warnings.warn("period detection failed; averaging over the second half of the run",
                      RuntimeWarning, stacklevel=2)
        a, bnd = t[len(t) // 2], t[-1]
        method = "window"
        n = 0
    return (_window_mean(t, np.array(cp), a, bnd), _window_mean(t, np.array(ce), a, bnd),
            (a, bnd), n, method)


def effective_viscosity_numeric(p: PhysicalParams, horizon: float | None = None,
                                config: SolverConfig | None = None, periods: int = 1) -> ViscosityReport:
    """Relative viscosity change from simulated time averages.

    ``(eta_eff - eta0)/eta0 = Phi zeta_f L^3 / eta0 * < (S12 + S21)/2 >``
    with ``S`` the nondimensional per-swimmer stress.
    """
    if not p.gamma_dot > 0:
        raise ValueError("numeric viscosity needs shear; use the asymptotic zero-shear path")
    d = nondimensionalize(p)
    prop, el, window, n, how = time_average_contribution(d, config, periods, max_time=horizon)
    scale = p.Phi * p.zeta_f * p.L**3 / p.eta0
    ep, ee = scale * prop, scale * el
    return ViscosityReport(ep, ee, ep + ee, (float(window[0]), float(window[1])),
                           "numeric", n, p.to_dict(), how)


def numeric_threshold(p: PhysicalParams, target: float = 0.0, vary: str = "L",
                      L_range: tuple[float, float] = (8e-6, 20e-6), scan_points: int = 4,
                      rtol: float = 2e-3, config: SolverConfig | None = None) -> Threshold:
    """Flagellum length where the simulated viscosity change crosses ``target``."""
    cache: dict[float, float] = {}

    def change(q: PhysicalParams) -> float:
        if q.L not in cache:
            cache[q.L] = effective_viscosity_numeric(q, config=config).total
        return cache[q.L]

    return viscosity_decrease_threshold(p, vary, target, L_range, change=change,
                                        rtol=rtol, scan_points=scan_points)


def liouville_residual(angular_velocity_fn: Callable[[np.ndarray], np.ndarray],
                       P: Callable[[np.ndarray], np.ndarray], n: int = 4096) -> float:
    """Maximum of ``|d/dtheta (omega P)|`` on a periodic grid (spectral derivative)."""
    th = 2 * math.pi * np.arange(n) / n
    g = angular_velocity_fn(th) * P(th)
    k = np.fft.rfftfreq(n, d=1.0 / n)
    gh = np.fft.rfft(g)
    # coefficients at roundoff level carry no information but get amplified by k
    gh[np.abs(gh) < 16 * np.finfo(float).eps * np.sum(np.abs(g))] = 0.0
    dg = np.fft.irfft(1j * k * gh, n)
    return float(np.max(np.abs(dg)))
