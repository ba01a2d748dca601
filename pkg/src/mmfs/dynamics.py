"""Time integration of the coupled body / flagellum system.

Unknowns are the tangent angle ``theta(s, t)`` on a uniform grid, the body
angle ``theta0 = theta(0, t)`` and the body centre.  The tangential stress
``Lambda`` has no time derivative and is recomputed from ``theta`` before
each step; ``N = -theta_ss / eps``.

Discretization
--------------
Nodes ``s_j = j h`` for ``j = 0..M`` plus one ghost node on each side.  The
flagellum is stored as the deflection ``phi = theta - theta0`` (so
``phi(0) = 0``): ``N0`` is a second difference divided by ``eps h^2`` and
would otherwise be swamped by roundoff in ``theta`` itself.  The
fourth-order operator, the tension-weighted second-order term and the
advection term are implicit with coefficients extrapolated in time (IMEX
SBDF2, backward Euler on the first step); the shear term ``-sin^2 theta``
and the Jeffery rotation of the body are explicit.  The body angle is
solved together with the flagellum because the ``N0`` coupling is as stiff
as the bending term.  Rotating the frame with the body couples every
deflection row to ``N0``; that rank-one term is handled with a
Sherman-Morrison update, so each step costs one banded factorization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import get_lapack_funcs, solve_banded

from .core import BackgroundFlow, DimensionlessParams, SwimmerState, write_csv


class SolverError(RuntimeError):
    """Numerical failure: singular system or repeated step rejection."""

    def __init__(self, message: str, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            message += " (" + ", ".join(f"{k}={v!r}" for k, v in diagnostics.items()) + ")"
        super().__init__(message)


@dataclass(frozen=True)
class Grid:
    n: int = 101

    def __post_init__(self):
        if self.n < 17:
            raise ValueError(f"grid needs n >= 17 nodes, got {self.n}")

    @property
    def ds(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping controls.

    ``theta_scheme`` is ``"sbdf2"`` or ``"be"`` (first order throughout).
    ``newton_tol`` bounds the boundary-condition residuals checked after
    each step; the scheme itself is linearly implicit so no nonlinear
    iteration is performed.  ``max_iters`` is the number of dt halvings
    allowed after a rejected step.
    """

    dt: float = 1e-4
    theta_scheme: str = "sbdf2"
    newton_tol: float = 1e-8
    max_iters: int = 6
    n: int = 101
    blowup: float = 1e6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.theta_scheme not in ("sbdf2", "be"):
            raise ValueError(f"unknown theta_scheme {self.theta_scheme!r}")

    @property
    def grid(self) -> Grid:
        return Grid(self.n)


def _fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for derivatives 0..m at ``z`` (Fornberg)."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


# third derivative at node 0 from nodes -1..3 and at node M from M-3..M+1
_W3_LEFT = _fd_weights(0.0, np.arange(-1.0, 4.0), 3)
_W3_RIGHT = -_W3_LEFT[::-1]
_gtsv = get_lapack_funcs("gtsv", (np.empty(1),))
_gbsv = get_lapack_funcs("gbsv", (np.empty(1),))
# quartic extrapolation to a ghost node
_EXTRAP = np.array([5.0, -10.0, 10.0, -5.0, 1.0])


def with_ghosts(theta: np.ndarray) -> np.ndarray:
    """Append ghost values obtained by quartic extrapolation."""
    theta = np.asarray(theta, dtype=float)
    left = _EXTRAP @ theta[:5]
    right = _EXTRAP @ theta[-1:-6:-1]
    return np.concatenate(([left], theta, [right]))


def derivatives(ext: np.ndarray, h: float):
    """First, second and third derivatives on nodes 0..M from a ghosted field."""
    e = ext
    th_s = (e[2:] - e[:-2]) / (2 * h)
    th_ss = (e[2:] - 2 * e[1:-1] + e[:-2]) / (h * h)
    th_sss = np.empty_like(th_s)
    # node j sits at e[j+1]; centred stencil needs j-2..j+2
    th_sss[1:-1] = (e[4:] - 2 * e[3:-1] + 2 * e[1:-3] - e[:-4]) / (2 * h**3)
    th_sss[0] = _W3_LEFT @ e[:5] / h**3
    th_sss[-1] = _W3_RIGHT @ e[-5:] / h**3
    return th_s, th_ss, th_sss


def normal_stress(theta_field, params: DimensionlessParams, enforce_free_end: bool = True) -> np.ndarray:
    """``N = -theta_ss / eps`` on the grid nodes.

    Centred differences inside, one-sided four-point stencils at the ends;
    ``N(1) = 0`` is imposed unless ``enforce_free_end`` is false.
    """
    theta_field = np.asarray(theta_field, dtype=float)
    n_plain = len(theta_field)
    h = 1.0 / (n_plain - 1)
    th_ss = np.empty(n_plain)
    th_ss[1:-1] = (theta_field[2:] - 2 * theta_field[1:-1] + theta_field[:-2]) / h**2
    w = np.array([2.0, -5.0, 4.0, -1.0])
    th_ss[0] = w @ theta_field[:4] / h**2
    th_ss[-1] = w @ theta_field[-1:-5:-1] / h**2
    out = -th_ss / params.eps
    if enforce_free_end:
        out[-1] = 0.0
    return out


def _normal_stress_ext(ext: np.ndarray, h: float, eps: float) -> np.ndarray:
    out = -(ext[2:] - 2 * ext[1:-1] + ext[:-2]) / (h * h * eps)
    return out


@dataclass(frozen=True)
class ExternalLoad:
    """Force ``(Fx, Fy)`` and torque ``T`` applied to the body (nondim)."""

    Fx: float = 0.0
    Fy: float = 0.0
    T: float = 0.0

    def __bool__(self):
        return bool(self.Fx or self.Fy or self.T)


NO_LOAD = ExternalLoad()


def solve_lambda(theta_field, theta0: float, params: DimensionlessParams,
                 flow: BackgroundFlow | None = None, load: ExternalLoad = NO_LOAD,
                 ghosts: tuple[float, float] | None = None) -> np.ndarray:
    """Tangential stress for a given flagellum shape.

    Solves ``Lambda_ss - theta_s^2 Lambda / alpha = -theta_ss^2/eps
    - sin(2 theta)/2 - (alpha+1)/(alpha eps) theta_sss theta_s`` with the
    Robin condition at the junction and ``Lambda(1) = 0``.  Ghost values
    are extrapolated from the field unless supplied.
    """
    flow = flow or BackgroundFlow()
    theta = np.array(theta_field, dtype=float)
    theta[0] = theta0
    if ghosts is None:
        ext = with_ghosts(theta - theta0)
    else:
        ext = np.concatenate(([ghosts[0]], theta, [ghosts[1]])) - theta0
    return _solve_lambda_ext(ext, params, flow.shear, load, theta0)


def _solve_lambda_ext(ext: np.ndarray, p: DimensionlessParams, shear: float,
                      load: ExternalLoad = NO_LOAD, theta0: float = 0.0) -> np.ndarray:
    """``ext`` holds ``theta - theta0`` including ghosts."""
    n = len(ext) - 2
    M = n - 1
    h = 1.0 / M
    a = p.alpha
    th = theta0 + ext[1:-1]
    th_s, th_ss, th_sss = derivatives(ext, h)
    A = th_s**2 / a
    R = -th_ss**2 / p.eps - 0.5 * shear * np.sin(2 * th) - (a + 1) / (a * p.eps) * th_sss * th_s
    th0 = float(th[0])
    n0 = -th_ss[0] / p.eps
    ft = load.Fx * math.cos(th0) + load.Fy * math.sin(th0)
    G = a * p.r / 4 * shear * math.sin(2 * th0) + p.f_p - th_s[0] * n0 - p.k_r * ft
    # unknowns Lambda_0..Lambda_{M-1}; ghost node eliminated through the Robin condition
    m = M
    diag = -(2.0 + h * h * A[:m])
    diag[0] = -(2.0 + 2 * h * p.k_r + h * h * A[0])
    upper = np.ones(m - 1)
    upper[0] = 2.0
    lower = np.ones(m - 1)
    rhs = h * h * R[:m]
    rhs[0] -= 2 * h * G
    _, _, _, lam, info = _gtsv(lower, diag, upper, rhs)
    if info != 0 or not np.all(np.isfinite(lam)):
        raise SolverError("singular tangential-stress system", theta0=th0, info=info)
    return np.concatenate((lam, [0.0]))


def body_rates(theta0: float, lam0: float, n0: float, center, params: DimensionlessParams,
               flow: BackgroundFlow, load: ExternalLoad = NO_LOAD):
    """Angular velocity and centre velocity of the body.

    ``dtheta0/dt = -((1-beta) sin^2 + beta cos^2) + 3 k_r N0 / r`` (plus the
    external torque term) and ``V = u(x_c) + k_r((Lambda0 + F.tau) tau
    + (N0 + F.n) n / alpha)``.
    """
    p = params
    S = flow.shear
    c, s = math.cos(theta0), math.sin(theta0)
    w = -S * ((1 - p.beta) * s * s + p.beta * c * c) + 3 * p.k_r / p.r * n0 \
        + 6 * p.k_r * load.T / p.r**2
    ft = load.Fx * c + load.Fy * s
    fn = -load.Fx * s + load.Fy * c
    tl = lam0 + ft
    nl = (n0 + fn) / p.alpha
    vx = S * center[1] + p.k_r * (tl * c - nl * s)
    vy = p.k_r * (tl * s + nl * c)
    return w, np.array([vx, vy])


def step_body(state: SwimmerState, dt: float, params: DimensionlessParams,
              flow: BackgroundFlow, load: ExternalLoad = NO_LOAD):
    """Explicit Euler update of the body pose from the current stresses."""
    w, v = body_rates(state.theta0, state.lam[0], state.n_stress[0], state.center, params, flow, load)
    c = np.asarray(state.center, dtype=float) + dt * v
    return state.theta0 + dt * w, (float(c[0]), float(c[1]))


class _ThetaSystem:
    """Banded matrix assembly for one implicit step.

    Unknowns are ``[phi_-1, theta0, phi_1, ..., phi_{M+1}]``; the slot of
    node 0 carries the body angle because ``phi_0 = 0``.  Rows: left ghost
    (third-derivative condition), body angle, interior nodes 1..M-1, then
    ``theta_ss(1) = 0`` and ``theta_s(1) = 0``.
    """

    LOWER, UPPER = 2, 4

    def __init__(self, n: int, params: DimensionlessParams):
        self.n = n
        self.M = M = n - 1
        self.h = h = 1.0 / M
        self.p = p = params
        self.size = N = n + 2
        lo, up = self.LOWER, self.UPPER
        self.row0 = lo + up  # storage row of the main diagonal (gbsv layout)
        base = np.zeros((2 * lo + up + 1, N))
        self._base = base
        for k, wk in enumerate(_W3_LEFT):
            self._put(base, 0, k, wk / h**3)
        sk = p.sigma * p.k_r / h**2
        self._put(base, 0, 0, -sk)
        self._put(base, 0, 2, -sk)
        self.kb = kb = 3 * p.k_r / (p.r * p.eps * h * h)
        j = np.arange(1, M)
        self.j = j
        self.k = j + 1
        d4 = 1.0 / (p.eps * p.alpha * h**4)
        for off, val in {-2: d4, -1: -4 * d4, 0: 6 * d4, 1: -4 * d4, 2: d4}.items():
            base[self.row0 - off, self.k + off] += val
        self._put(base, M + 1, M, 1.0)
        self._put(base, M + 1, M + 1, -2.0)
        self._put(base, M + 1, M + 2, 1.0)
        self._put(base, M + 2, M, -1.0)
        self._put(base, M + 2, M + 2, 1.0)
        # phi_0 = 0: nothing multiplies the node-0 slot except in the body row
        base[:, 1] = 0.0
        self._put(base, 1, 0, kb)
        self._put(base, 1, 2, kb)
        # rank-one coupling -kb (phi_-1 + phi_1) in every interior row
        self.u = np.zeros(N)
        self.u[self.k] = -kb

    def _put(self, ab, i, j, v):
        ab[self.row0 + i - j, j] += v

    def solve(self, g0: float, dt: float, a_coef, c_coef, rhs_int, lam0: float,
              cos2_0: float, body_rhs: float, shear: float, load_n: float, load_T: float):
        p, h = self.p, self.h
        ab = self._base.copy()
        e2 = p.eps * lam0 / (2 * h)
        self._put(ab, 0, 0, e2)
        self._put(ab, 0, 2, -e2)
        j, k, r0 = self.j, self.k, self.row0
        aa = a_coef[j] / h**2
        cc = c_coef[j] / (2 * h)
        ab[r0 + 1, k - 1] += -aa + cc
        ab[r0, k] += g0 / dt + 2 * aa
        ab[r0 - 1, k + 1] += -aa - cc
        ab[:, 1] = 0.0
        self._put(ab, 1, 1, g0 / dt)
        b = np.zeros((self.size, 2))
        b[0, 0] = p.eps * (p.alpha * p.beta * p.r / 2 * shear * cos2_0) \
            - p.eps * (p.k_r * load_n + 3 * p.alpha * p.k_r * load_T / p.r)
        b[1, 0] = body_rhs
        b[k, 0] = rhs_int[j]
        b[:, 1] = self.u
        _, _, x, info = _gbsv(self.LOWER, self.UPPER, ab, b, overwrite_ab=True, overwrite_b=True)
        if info != 0:
            raise SolverError("singular flagellum system", info=info)
        y, z = x[:, 0], x[:, 1]
        out = y - z * ((y[0] + y[2]) / (1.0 + z[0] + z[2]))
        return float(out[1]), out


@dataclass
class Trajectory:
    """Sampled output of :func:`simulate`."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    stresses: list = field(default_factory=list)

    COLUMNS = ("t", "theta0", "x_c", "y_c", "N0", "Lambda0", "energy")

    def append(self, state: SwimmerState, stress=None):
        if self.times and not state.t > self.times[-1]:
            raise ValueError("trajectory times must be strictly increasing")
        self.times.append(state.t)
        self.states.append(state)
        if stress is not None:
            self.stresses.append(stress)

    def __len__(self):
        return len(self.times)

    def theta0(self) -> np.ndarray:
        return np.array([st.theta0 for st in self.states])

    def rows(self, eps: float):
        for st in self.states:
            yield [st.t, st.theta0, st.center[0], st.center[1], st.n_stress[0], st.lam[0],
                   bending_energy(st.theta, eps)]

    def to_csv(self, path, eps: float) -> Path:
        return write_csv(path, list(self.COLUMNS), self.rows(eps))

    def write_shapes(self, directory, stride: int = 1, r: float = 0.0) -> list[Path]:
        """One ``(s, theta, x, y)`` file per written sample."""
        out = []
        for i in range(0, len(self.states), stride):
            st = self.states[i]
            xy = reconstruct_positions(st, r)
            out.append(write_csv(Path(directory) / f"shape_{i:06d}.csv", ["s", "theta", "x", "y"],
                                 zip(st.s, st.theta, xy[:, 0], xy[:, 1])))
        return out


def bending_energy(theta: np.ndarray, eps: float) -> float:
    """``(1/(2 eps)) int theta_s^2 ds``, trapezoidal on the grid."""
    h = 1.0 / (len(theta) - 1)
    ts = np.gradient(theta, h, edge_order=2)
    return float(np.trapezoid(ts**2, dx=h) / (2 * eps))


def reconstruct_positions(state: SwimmerState, r: float = 0.0) -> np.ndarray:
    """Flagellum centreline ``X(s)`` as an ``(n, 2)`` array.

    ``X(0)`` is the junction, ``center + (r/2) tau0``; segments are
    integrated with the midpoint angle so each has length exactly ``ds``.
    """
    th = np.asarray(state.theta, dtype=float)
    h = 1.0 / (len(th) - 1)
    mid = 0.5 * (th[1:] + th[:-1])
    seg = h * np.column_stack((np.cos(mid), np.sin(mid)))
    x0 = np.asarray(state.center, dtype=float) + 0.5 * r * np.array([math.cos(state.theta0), math.sin(state.theta0)])
    return x0 + np.vstack((np.zeros(2), np.cumsum(seg, axis=0)))


def initial_state(params: DimensionlessParams, theta0: float = 0.0, amplitude: float = 0.01,
                  n: int = 101, center=(0.0, 0.0), flow: BackgroundFlow | None = None) -> SwimmerState:
    """Straight flagellum perturbed by ``amplitude * sin(pi s / 2)``."""
    s = np.linspace(0.0, 1.0, n)
    phi = amplitude * np.sin(0.5 * math.pi * s)
    theta = theta0 + phi
    lam = _solve_lambda_ext(with_ghosts(phi), params, (flow or BackgroundFlow()).shear, NO_LOAD, theta0)
    nst = normal_stress(theta, params)
    return SwimmerState(theta0, (float(center[0]), float(center[1])), theta, lam, nst, 0.0)


LoadFn = Callable[["FlagellumSolver"], ExternalLoad]


class FlagellumSolver:
    """Stateful integrator; one :meth:`step` advances ``theta``, ``theta0`` and the centre.

    ``load`` is called at the start of each step with the solver and returns
    the external force and torque on the body (used for wall contact).
    """

    def __init__(self, state: SwimmerState, params: DimensionlessParams,
                 flow: BackgroundFlow | None = None, config: SolverConfig | None = None,
                 load: LoadFn | None = None):
        self.p = params
        self.flow = flow or BackgroundFlow()
        self.cfg = config or SolverConfig(n=state.n)
        self.n = state.n
        self.h = 1.0 / (self.n - 1)
        self.sys = _ThetaSystem(self.n, params)
        self.load_fn = load
        self.dt = self.cfg.dt
        self.t = state.t
        self.th0 = float(state.theta0)
        phi = np.array(state.theta, dtype=float) - self.th0
        phi[0] = 0.0
        self.phi = with_ghosts(phi)
        self.center = np.array(state.center, dtype=float)
        self.load = NO_LOAD
        self._hist = None  # quantities from the previous step for SBDF2
        self.steps = 0
        self.rejections = 0
        self._refresh()

    # -- derived fields -------------------------------------------------
    def _refresh(self):
        self.load = self.load_fn(self) if self.load_fn else NO_LOAD
        self.lam = _solve_lambda_ext(self.phi, self.p, self.flow.shear, self.load, self.th0)
        self.nst = _normal_stress_ext(self.phi, self.h, self.p.eps)
        th_s, _, _ = derivatives(self.phi, self.h)
        lam_s = np.gradient(self.lam, self.h, edge_order=2)
        a = self.p.alpha
        self.a_coef = self.lam / a + th_s**2 / self.p.eps
        self.c_coef = (a + 1) / a * lam_s + self.p.f_p
        self.explicit = -self.flow.shear * np.sin(self.theta) ** 2
        self.w, self.v = body_rates(self.theta0, self.lam[0], self.nst[0], self.center,
                                    self.p, self.flow, self.load)

    @property
    def ext(self) -> np.ndarray:
        """Tangent angle including ghost nodes."""
        return self.th0 + self.phi

    @property
    def theta(self) -> np.ndarray:
        return self.th0 + self.phi[1:-1]

    @property
    def theta0(self) -> float:
        return self.th0

    @property
    def jeffery(self) -> float:
        c, s = math.cos(self.theta0), math.sin(self.theta0)
        return -self.flow.shear * ((1 - self.p.beta) * s * s + self.p.beta * c * c)

    def state(self) -> SwimmerState:
        nst = self.nst.copy()
        return SwimmerState(self.theta0, (float(self.center[0]), float(self.center[1])),
                            self.theta.copy(), self.lam.copy(), nst, self.t,
                            {"ghosts": (self.th0 + float(self.phi[0]), self.th0 + float(self.phi[-1]))})

    # -- stepping -------------------------------------------------------
    def _advance(self, dt: float):
        p = self.p
        cur = dict(phi=self.phi, th0=self.th0, a=self.a_coef, c=self.c_coef, E=self.explicit,
                   J=self.jeffery, lam0=self.lam[0], cos2=math.cos(2 * self.theta0),
                   v=self.v, dt=dt)
        prev = self._hist
        sbdf2 = self.cfg.theta_scheme == "sbdf2" and prev is not None and prev["dt"] == dt
        T = self.load.T
        torque = 6 * p.k_r * T / p.r**2
        if sbdf2:
            g0 = 1.5
            ex = lambda key: 2 * cur[key] - prev[key]  # noqa: E731
            a_c, c_c, lam0, cos2, J = ex("a"), ex("c"), ex("lam0"), ex("cos2"), ex("J")
            rhs_int = (2 * self.phi[1:-1] - 0.5 * prev["phi"][1:-1]) / dt + ex("E")
            body = (2 * self.th0 - 0.5 * prev["th0"]) / dt
        else:
            g0 = 1.0
            a_c, c_c, lam0, cos2, J = cur["a"], cur["c"], cur["lam0"], cur["cos2"], cur["J"]
            rhs_int = self.phi[1:-1] / dt + cur["E"]
            body = self.th0 / dt
        body += J + torque
        rhs_int = rhs_int - (J + torque)
        th0 = self.th0
        load_n = -self.load.Fx * math.sin(th0) + self.load.Fy * math.cos(th0)
        new = self.sys.solve(g0, dt, a_c, c_c, rhs_int, lam0, cos2, body, self.flow.shear, load_n, T)
        if sbdf2:
            center = self.center + dt * (1.5 * self.v - 0.5 * prev["v"])
        else:
            center = self.center + dt * self.v
        return new, center, cur

    def step(self):
        """Advance by one step, halving dt on blow-up."""
        dt = self.dt
        for attempt in range(self.cfg.max_iters + 1):
            new, center, cur = self._advance(dt)
            th0_new, phi_new = new
            if math.isfinite(th0_new) and np.all(np.isfinite(phi_new)) \
                    and np.max(np.abs(phi_new)) < self.cfg.blowup \
                    and np.all(np.isfinite(center)):
                break
            self.rejections += 1
            dt *= 0.5
            self._hist = None
        else:
            raise SolverError("step rejected repeatedly", t=self.t, dt=dt)
        if dt != self.dt:
            self.dt = dt
            self._hist = None
        else:
            self._hist = cur
        phi_new[1] = 0.0
        self.th0, self.phi = th0_new, phi_new
        self.center = center
        self.t += dt
        self.steps += 1
        self._refresh()
        if not (np.all(np.isfinite(self.lam)) and np.max(np.abs(self.lam)) < self.cfg.blowup):
            raise SolverError("tangential stress blew up", t=self.t, max_lambda=float(np.max(np.abs(self.lam))))

    def bc_residuals(self) -> dict:
        """Discrete boundary-condition residuals of the current state."""
        th_s, th_ss, _ = derivatives(self.phi, self.h)
        return {"clamp": 0.0, "lambda_end": abs(self.lam[-1]), "n_end": abs(self.nst[-1]) * self.p.eps,
                "theta_s_end": abs(th_s[-1]), "theta_ss_end": abs(th_ss[-1])}


def step_theta(state: SwimmerState, dt: float, params: DimensionlessParams,
               flow: BackgroundFlow | None = None, config: SolverConfig | None = None) -> np.ndarray:
    """One backward-Euler step of the flagellum equation from ``state``.

    The returned field includes the co-advanced body angle at index 0.
    """
    cfg = replace(config or SolverConfig(n=state.n), dt=dt, theta_scheme="be", n=state.n)
    solver = FlagellumSolver(state, params, flow, cfg)
    solver.step()
    return solver.theta.copy()


def simulate(initial: SwimmerState, horizon: float, params: DimensionlessParams,
             flow: BackgroundFlow | None = None, config: SolverConfig | None = None,
             sample_dt: float | None = None, load: LoadFn | None = None,
             on_step: Callable[[FlagellumSolver], bool | None] | None = None,
             record_stress: bool = False, r_geometry: float | None = None) -> Trajectory:
    """Integrate from ``initial`` to ``initial.t + horizon``.

    Samples are taken every ``sample_dt`` (default: every step).  ``on_step``
    is called after each accepted step; returning ``True`` stops the run.
    """
    cfg = config or SolverConfig(n=initial.n)
    solver = FlagellumSolver(initial, params, flow, cfg, load)
    traj = Trajectory()
    kirkwood = None
    if record_stress:
        from .rheology import kirkwood_stress as kirkwood
    t_end = initial.t + horizon
    next_sample = initial.t

    def record():
        st = solver.state()
        traj.append(st, kirkwood(st, params) if kirkwood else None)

    record()
    next_sample += sample_dt or 0.0
    while solver.t < t_end - 1e-12 * max(1.0, abs(t_end)):
        if solver.t + solver.dt > t_end:
            solver.dt = t_end - solver.t
            solver._hist = None
        solver.step()
        stop = on_step(solver) if on_step else None
        if sample_dt is None or solver.t >= next_sample - 1e-12:
            record()
            if sample_dt:
                while next_sample <= solver.t + 1e-12:
                    next_sample += sample_dt
        if stop:
            break
    return traj
