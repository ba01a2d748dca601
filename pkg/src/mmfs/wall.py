"""Swimmer pressed against a rigid wall, and free-swimmer oscillations.

Geometry.  The wall is the line ``x = 0`` with fluid in ``x > 0``.  The
swimmer starts perpendicular to the wall, body first, with its flagellum
trailing into the fluid; it is a pusher, so the propulsion drives the body
into the wall and compresses the flagellum.  Internally the tangent at the
junction points along ``+x`` (``theta0 = 0``) and the propulsion density is
``-|f_p|``; reported angles are the swimming direction, ``theta0 + pi``,
so the initial orientation is ``pi``.

Contact.  The wall pushes on the extremal point ``P`` of the elliptical
body with a normal force ``lambda >= 0`` and no friction.  ``lambda`` is
the smallest force that stops ``P`` moving into the wall, plus a stiff
penalty ``kappa_w * depth`` for residual overlap; after each step any
remaining overlap is removed by moving the body back to the wall.  The force also produces the torque ``(P - O) x F`` on the
body and enters the flagellum boundary conditions like any body load.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .core import BackgroundFlow, DimensionlessParams, PhysicalParams, nondimensionalize, write_csv
from .dynamics import (NO_LOAD, ExternalLoad, FlagellumSolver, SolverConfig, SolverError,
                       _solve_lambda_ext, body_rates, initial_state)

#: reference shear rate setting the time scale of quiescent runs [1/s]
GAMMA_REF = 0.1


class Regime(str, Enum):
    TRAPPED_OSCILLATING = "TrappedOscillating"
    ESCAPED = "Escaped"
    TRAPPED_STRAIGHT = "TrappedStraight"
    INDETERMINATE = "Indeterminate"


#: order of the regimes as the flagellum stiffens
REGIME_ORDER = (Regime.TRAPPED_OSCILLATING, Regime.ESCAPED, Regime.TRAPPED_STRAIGHT)


class WallContactError(SolverError):
    """Penetration exceeded the allowed depth; the contact law is too soft."""


def wall_params(**overrides) -> PhysicalParams:
    """Physical constants of the wall runs: tabulated values with ``F_p = 1e-7 N/m``."""
    base = dict(F_p=1e-7, gamma_dot=0.0, beta=0.0162)
    base.update(overrides)
    return PhysicalParams(**base)


@dataclass(frozen=True)
class WallScenario:
    """Initial condition, contact law and classification tolerances.

    Lengths are in units of ``L`` and times in units of ``1/GAMMA_REF``.
    ``gap`` is the initial distance from the body tip to the wall.  The sign
    of ``amplitude`` picks the side the flagellum is bent towards; zero gives
    the unperturbed state, which never leaves the line ``y = 0``.
    """

    amplitude: float = 0.01
    kappa_w: float = 1e3
    gap: float = 3.5
    horizon: float = 3.0
    dt: float = 2e-4
    n: int = 41
    escape_distance: float = 5.0
    angle_tol: float = 0.1
    oscillation_tol: float = 1e-3
    max_depth: float = 0.1  # abort when penetration exceeds this fraction of the body length

    def __post_init__(self):
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        for name in ("kappa_w", "horizon", "dt", "escape_distance", "angle_tol", "oscillation_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gap < 0:
            raise ValueError("gap must be non-negative")


def body_semi_axes(p: DimensionlessParams) -> tuple[float, float]:
    """Semi-axes ``(a, b)`` of the body in units of ``L``."""
    a = 0.5 * p.r
    return a, a * math.sqrt(p.beta / (1.0 - p.beta))


def contact_point(theta0: float, center, p: DimensionlessParams) -> np.ndarray:
    """Point of the body with the smallest ``x``."""
    a, b = body_semi_axes(p)
    c, s = math.cos(theta0), math.sin(theta0)
    den = math.sqrt(a * a * c * c + b * b * s * s)
    tau = np.array([c, s])
    nrm = np.array([-s, c])
    return np.asarray(center, dtype=float) + (-a * a * c * tau + b * b * s * nrm) / den


def wall_distance(theta0: float, center, p: DimensionlessParams) -> float:
    """Signed distance from the body to the wall (negative when penetrating)."""
    return float(contact_point(theta0, center, p)[0])


def contact_load(theta0: float, center, phi_ext: np.ndarray, n0: float, p: DimensionlessParams,
                 scenario: WallScenario, flow: BackgroundFlow | None = None) -> ExternalLoad:
    """Wall reaction on the body for the current configuration.

    ``phi_ext`` is the flagellum deflection ``theta - theta0`` with ghosts.
    Zero when the body does not touch the wall.
    """
    flow = flow or BackgroundFlow.quiescent()
    P = contact_point(theta0, center, p)
    depth = -P[0]
    if depth < -1e-12 * p.r:
        return NO_LOAD
    if depth > scenario.max_depth * p.r:
        raise WallContactError("body penetrated the wall", depth=depth, limit=scenario.max_depth * p.r)
    ly = P[1] - center[1]

    def contact_speed(lam: float) -> float:
        load = ExternalLoad(lam, 0.0, -ly * lam)
        lam_field = _solve_lambda_ext(phi_ext, p, flow.shear, load, theta0)
        w, v = body_rates(theta0, lam_field[0], n0, center, p, flow, load)
        return v[0] - w * ly

    v0 = contact_speed(0.0)
    gain = contact_speed(1.0) - v0
    lam = max(0.0, -v0 / gain + scenario.kappa_w * max(depth, 0.0)) if gain > 0 else 0.0
    if lam == 0.0:
        return NO_LOAD
    return ExternalLoad(lam, 0.0, -ly * lam)


def wall_torque(state, params: DimensionlessParams, scenario: WallScenario | None = None) -> float:
    """Torque of the wall reaction about the body centre for a :class:`SwimmerState`."""
    from .dynamics import with_ghosts

    scenario = scenario or WallScenario()
    phi = np.asarray(state.theta, dtype=float) - state.theta0
    phi[0] = 0.0
    load = contact_load(state.theta0, state.center, with_ghosts(phi), state.n_stress[0], params, scenario)
    return load.T


@dataclass
class EscapeOutcome:
    regime: Regime
    theta_star: float
    detach_time: float | None
    max_wall_distance: float
    final_wall_distance: float
    amplitude: float
    contact_time: float | None
    min_wall_distance: float
    K_b: float | None = None
    times: np.ndarray = field(default=None, repr=False)
    theta: np.ndarray = field(default=None, repr=False)
    distance: np.ndarray = field(default=None, repr=False)
    torque_wall: np.ndarray = field(default=None, repr=False)
    torque_flagellum: np.ndarray = field(default=None, repr=False)

    def row(self) -> list:
        return [self.K_b, self.regime.value, self.theta_star,
                "" if self.detach_time is None else self.detach_time, self.amplitude]

    def summary(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if not isinstance(v, np.ndarray) and v is not None}
        d["regime"] = self.regime.value
        return d


OUTCOME_COLUMNS = ("K_b", "class", "theta_star", "detach_time", "amplitude")


def _half_range(x: np.ndarray) -> float:
    return 0.5 * float(np.max(x) - np.min(x)) if len(x) else 0.0


def classify_escape(times, theta, distance, scenario: WallScenario) -> tuple[Regime, float, float]:
    """Regime, limiting angle and oscillation amplitude from a wall run.

    ``theta`` is the unwrapped reported orientation (swimming direction)
    and ``distance`` the gap between body and wall.  The last 20 % of the
    run decides: a swimmer beyond ``escape_distance`` that is not parallel
    to the wall has escaped; a parallel swimmer with a steady orientation is
    trapped and straight; one still near the wall whose orientation keeps
    changing is trapped and oscillating.  Anything else is indeterminate.  The
    returned angle is wrapped to ``[0, 2 pi)``.
    """
    t = np.asarray(times)
    tail = t >= t[0] + 0.8 * (t[-1] - t[0])
    th_tail = np.asarray(theta)[tail]
    theta_star = float(np.mean(th_tail))
    amp = _half_range(th_tail)
    # angular distance to the nearest wall-parallel direction
    x = (theta_star - math.pi / 2) % math.pi
    parallel = min(x, math.pi - x) < scenario.angle_tol
    theta_star = theta_star % (2 * math.pi)
    if distance[-1] >= scenario.escape_distance and not parallel:
        return Regime.ESCAPED, theta_star, amp
    if parallel and amp <= scenario.oscillation_tol:
        return Regime.TRAPPED_STRAIGHT, theta_star, amp
    if distance[-1] < scenario.escape_distance and amp > scenario.oscillation_tol:
        # still at the wall and still turning: oscillating or circling in place
        return Regime.TRAPPED_OSCILLATING, theta_star, amp
    return Regime.INDETERMINATE, theta_star, amp


def simulate_escape(K_b: float, scenario: WallScenario | None = None,
                    params: PhysicalParams | None = None, sample_dt: float = 1e-3) -> EscapeOutcome:
    """Run the entrapment scenario at bending stiffness ``K_b`` and classify it."""
    scenario = scenario or WallScenario()
    phys = (params or wall_params()).replace(K_b=K_b)
    d = nondimensionalize(phys, GAMMA_REF)
    d = d.replace(f_p=-abs(d.f_p))
    flow = BackgroundFlow.quiescent()
    a_body, _ = body_semi_axes(d)
    center = (scenario.gap + a_body, 0.0)
    st = initial_state(d, 0.0, scenario.amplitude, scenario.n, center=center, flow=flow)
    cfg = SolverConfig(dt=scenario.dt, n=scenario.n)

    def load_fn(solver: FlagellumSolver) -> ExternalLoad:
        n0 = -(solver.phi[0] + solver.phi[2]) / (solver.h * solver.h * d.eps)
        return contact_load(solver.th0, solver.center, solver.phi, n0, d, scenario, flow)

    solver = FlagellumSolver(st, d, flow, cfg, load_fn)
    ts, th, dist, tw, tf = [], [], [], [], []
    next_t = 0.0

    def record():
        ts.append(solver.t)
        th.append(solver.th0 + math.pi)
        dist.append(wall_distance(solver.th0, solver.center, d))
        tw.append(solver.load.T)
        tf.append(3 * d.k_r / d.r * solver.nst[0])

    def project():
        depth = -wall_distance(solver.th0, solver.center, d)
        if depth > 0:
            if depth > scenario.max_depth * d.r:
                raise WallContactError("body penetrated the wall", depth=depth, t=solver.t)
            solver.center[0] += depth
            solver._refresh()

    record()
    n_steps = int(round(scenario.horizon / scenario.dt))
    for _ in range(n_steps):
        solver.step()
        project()
        if solver.t >= next_t + sample_dt - 1e-12:
            next_t = solver.t
            record()
    times, theta, distance = np.array(ts), np.array(th), np.array(dist)
    regime, theta_star, amp = classify_escape(times, theta, distance, scenario)
    torque_w = np.array(tw)
    touching = np.nonzero(torque_w != 0.0)[0]
    contact_time = float(times[touching[0]]) if len(touching) else None
    in_contact = distance <= 1e-9 * d.r
    detach_time = None
    if in_contact.any() and not in_contact[-1]:
        detach_time = float(times[np.nonzero(in_contact)[0][-1] + 1])
    return EscapeOutcome(regime, theta_star, detach_time, float(np.max(distance)), float(distance[-1]),
                         amp, contact_time, float(np.min(distance)), K_b, times, theta, distance,
                         torque_w, np.array(tf))


def _escape_outcome(args) -> EscapeOutcome:
    K_b, scenario, params = args
    out = simulate_escape(K_b, scenario, params)
    # drop the time series so results pickle cheaply between processes
    out.times = out.theta = out.distance = out.torque_wall = out.torque_flagellum = None
    return out


def escape_scan(K_values, scenario: WallScenario | None = None, params: PhysicalParams | None = None,
                threads: int = 1) -> list[EscapeOutcome]:
    """Outcomes for each stiffness, sorted by ``K_b``."""
    scenario = scenario or WallScenario()
    ks = sorted(float(k) for k in K_values)
    return _map(_escape_outcome, [(k, scenario, params) for k in ks], threads)


@dataclass
class RegimeBoundaries:
    """Transition stiffnesses found by a scan followed by bisection."""

    K_low: float | None
    K_high: float | None
    transitions: list = field(default_factory=list)  # (K_left, K_right, regime_left, regime_right)
    scan: list = field(default_factory=list)  # (K_b, regime)
    ordered: bool = True

    def to_dict(self) -> dict:
        return {"K_low": self.K_low, "K_high": self.K_high, "ordered": self.ordered,
                "transitions": [[a, b, ra.value, rb.value] for a, b, ra, rb in self.transitions],
                "scan": [[k, r.value] for k, r in self.scan]}


def _map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def is_staircase(regimes) -> bool:
    """True when the classes, ignoring indeterminate runs, read TO, E, TS once each in order."""
    seq = [r for r in regimes if r != Regime.INDETERMINATE]
    collapsed = [r for i, r in enumerate(seq) if i == 0 or r != seq[i - 1]]
    return collapsed == list(REGIME_ORDER)


def regime_boundaries(K_b_range=(1e-24, 1e-22), scenario: WallScenario | None = None,
                      params: PhysicalParams | None = None, scan_points: int = 9,
                      rtol: float = 0.01, threads: int = 1,
                      classify: Callable[[float], Regime] | None = None) -> RegimeBoundaries:
    """Stiffnesses where the wall outcome changes class.

    A geometric scan brackets every change of class; each bracket is then
    bisected in ``log K_b`` until its width is below ``rtol``; a class met
    inside a bracket splits it, and both halves are resolved.  ``K_high``
    is the last Escaped/TrappedStraight transition and ``K_low`` the upper
    edge of the last TrappedOscillating zone below it that is followed by
    escape (normally a direct TrappedOscillating/Escaped transition);
    either is ``None`` when absent.  All
    transitions are listed, and ``ordered`` tells whether the scan is the
    expected three-step staircase.  ``classify`` replaces the simulation
    (``K_b -> Regime``).
    """
    scenario = scenario or WallScenario()
    lo, hi = K_b_range
    if not 0 < lo < hi:
        raise ValueError("K_b_range must be increasing and positive")
    if classify is None:
        grid = [float(k) for k in np.geomspace(lo, hi, scan_points)]
        scan = [(o.K_b, o.regime) for o in escape_scan(grid, scenario, params, threads)]

        def classify(k):
            return simulate_escape(k, scenario, params).regime
    else:
        scan = [(float(k), classify(float(k))) for k in np.geomspace(lo, hi, scan_points)]
    transitions = []

    def bisect(k1, r1, k2, r2):
        while k2 / k1 > 1 + rtol:
            km = math.sqrt(k1 * k2)
            rm = classify(km)
            if rm == r1:
                k1 = km
            elif rm == r2:
                k2 = km
            else:
                # a third class inside the bracket: resolve both halves
                bisect(k1, r1, km, rm)
                k1, r1 = km, rm
        transitions.append((k1, k2, r1, r2))

    for (k1, r1), (k2, r2) in zip(scan[:-1], scan[1:]):
        if r1 != r2:
            bisect(k1, r1, k2, r2)
    k_low = k_high = None
    mids = [math.sqrt(k1 * k2) for k1, k2, _, _ in transitions]
    pairs = [(r1, r2) for _, _, r1, r2 in transitions]
    top = len(pairs)
    for i, pair in enumerate(pairs):
        if pair == (Regime.ESCAPED, Regime.TRAPPED_STRAIGHT):
            k_high, top = mids[i], i
    for i, (r1, _) in enumerate(pairs[:top]):
        if r1 == Regime.TRAPPED_OSCILLATING and Regime.ESCAPED in (r for _, r in pairs[i:top + 1]):
            k_low = mids[i]
    # classes in order of K_b, including any found only by bisection
    seq = [transitions[0][2]] + [t[3] for t in transitions] if transitions else [r for _, r in scan]
    return RegimeBoundaries(k_low, k_high, transitions, scan, is_staircase(seq))


def write_outcomes_csv(path, outcomes) -> None:
    write_csv(path, list(OUTCOME_COLUMNS), (o.row() for o in sorted(outcomes, key=lambda o: o.K_b)))


@dataclass
class OscillationResult:
    kind: str  # "limit_cycle", "decaying", "monotone" or "steady"
    amplitude: float
    K_b: float
    times: np.ndarray = field(default=None, repr=False)
    n0: np.ndarray = field(default=None, repr=False)


def classify_oscillation(times, n0, rel_tol: float = 0.05, min_crossings: int = 4) -> tuple[str, float]:
    """Classify the late-time behaviour of ``N0(t)``.

    The amplitude is half the peak-to-peak range over the last 20 % of the
    run.  Crossings of the late mean are counted over the second half,
    ignoring deviations at roundoff level.  An oscillating signal whose
    amplitude over the last 10 % is within ``rel_tol`` of the preceding
    10 % is a limit cycle, otherwise it is decaying.  A signal that does not
    oscillate is ``"monotone"`` when it tends to zero and ``"steady"`` when
    it settles on a non-zero value (a bent, steadily turning swimmer).
    """
    t = np.asarray(times)
    x = np.asarray(n0, dtype=float)
    span = t[-1] - t[0]
    tail = x[t >= t[0] + 0.8 * span]
    amp = _half_range(tail)
    peak = float(np.max(np.abs(x)))
    if peak == 0.0:
        return "monotone", 0.0
    late = x[t >= t[0] + 0.9 * span]
    centre = float(np.mean(late))
    half = x[t >= t[0] + 0.5 * span] - centre
    noise = 1e-10 * max(float(np.max(np.abs(x[t >= t[0] + 0.5 * span]))), 1e-300)
    signs = np.sign(half[np.abs(half) > noise])
    crossings = int(np.count_nonzero(signs[1:] != signs[:-1]))
    if crossings >= min_crossings:
        a1 = _half_range(x[(t >= t[0] + 0.8 * span) & (t < t[0] + 0.9 * span)])
        a2 = _half_range(late)
        if a1 > 0 and a2 / a1 >= 1 - rel_tol:
            return "limit_cycle", amp
        return "decaying", amp
    if abs(centre) <= 1e-6 * peak:
        return "monotone", amp
    return "steady", amp


def free_swimmer_oscillation(K_b: float, params: PhysicalParams | None = None, horizon: float = 4.0,
                             amplitude: float = 0.01, dt: float = 2e-4, n: int = 41,
                             sample_dt: float = 1e-3) -> OscillationResult:
    """Pusher in fluid at rest without walls; tracks ``N0(t)``."""
    phys = (params or wall_params()).replace(K_b=K_b)
    d = nondimensionalize(phys, GAMMA_REF)
    d = d.replace(f_p=-abs(d.f_p))
    flow = BackgroundFlow.quiescent()
    st = initial_state(d, 0.0, amplitude, n, flow=flow)
    solver = FlagellumSolver(st, d, flow, SolverConfig(dt=dt, n=n))
    ts, ns = [0.0], [float(solver.nst[0])]
    next_t = 0.0
    for _ in range(int(round(horizon / dt))):
        solver.step()
        if solver.t >= next_t + sample_dt - 1e-12:
            next_t = solver.t
            ts.append(solver.t)
            ns.append(float(solver.nst[0]))
    kind, amp = classify_oscillation(ts, ns)
    return OscillationResult(kind, amp, K_b, np.array(ts), np.array(ns))
