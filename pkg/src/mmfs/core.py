"""Model parameters, nondimensionalization and shared state types.

All SI quantities live in :class:`PhysicalParams`.  The simulator works in
units where the flagellum length ``L`` is one, time is measured in ``1/gamma_dot``
and stresses (force per length) in ``zeta_f * gamma_dot * L**2``.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

# Table-2 values that disagree with the formulas they are listed next to.
TABLE2_BETA = 0.0162
TABLE2_K_R = 0.65


class ParameterError(ValueError):
    """Raised when a model parameter lies outside its domain."""

    def __init__(self, name: str, value: Any, reason: str = "must be positive"):
        self.name = name
        self.value = value
        super().__init__(f"{name}={value!r}: {reason}")


def body_shape_beta(ell: float, d: float) -> float:
    """Shape parameter ``d**2 / (ell**2 + d**2)`` of an elliptical body.

    ``ell`` is the major axis and ``d`` the minor axis, so the result lies in
    ``(0, 1/2]``; 1/2 is a disc, values near 0 are needle-like.
    """
    if d < 0 or ell <= 0:
        raise ParameterError("ell" if ell <= 0 else "d", ell if ell <= 0 else d)
    if d > ell:
        raise ParameterError("d", d, f"minor axis exceeds major axis ell={ell!r}")
    return d * d / (ell * ell + d * d)


def rotational_drag(ell: float, zeta_h: float) -> float:
    """Rotational drag of the body, ``ell**2 * zeta_h / 6``."""
    if ell < 0:
        raise ParameterError("ell", ell, "must be non-negative")
    if zeta_h <= 0:
        raise ParameterError("zeta_h", zeta_h)
    return ell * ell * zeta_h / 6.0


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional model constants (SI units).

    ``beta``, ``zeta_r`` and ``k_r`` may be left as ``None``; they are then
    derived from the body axes and drags (see :attr:`body_beta`,
    :attr:`rot_drag`, :attr:`drag_ratio`).  ``F_p`` is a force per unit
    flagellum length.
    """

    L: float = 1.2e-5
    ell: float = 5e-6
    d: float = 7e-7
    gamma_dot: float = 0.1
    eta0: float = 1e-3
    F_p: float = 1.5e-6
    K_b: float = 3e-23
    zeta_f: float = 1e-3
    zeta_h: float = 1.6e-8
    alpha: float = 2.0
    Phi: float = 5e15
    beta: float | None = None
    zeta_r: float | None = None
    k_r: float | None = None

    def __post_init__(self):
        for name in ("L", "ell", "d", "eta0", "K_b", "zeta_f", "zeta_h", "Phi"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParameterError(name, v)
        if not math.isfinite(self.gamma_dot) or self.gamma_dot < 0:
            raise ParameterError("gamma_dot", self.gamma_dot, "must be non-negative")
        if not math.isfinite(self.F_p):
            raise ParameterError("F_p", self.F_p, "must be finite")
        if not self.alpha >= 1:
            raise ParameterError("alpha", self.alpha, "must be >= 1")
        if self.d > self.ell:
            raise ParameterError("d", self.d, "minor axis exceeds major axis")
        if self.beta is not None and not 0 < self.beta <= 0.5:
            raise ParameterError("beta", self.beta, "must lie in (0, 1/2]")
        for name in ("zeta_r", "k_r"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ParameterError(name, v)

    @property
    def body_beta(self) -> float:
        return self.beta if self.beta is not None else body_shape_beta(self.ell, self.d)

    @property
    def rot_drag(self) -> float:
        return self.zeta_r if self.zeta_r is not None else rotational_drag(self.ell, self.zeta_h)

    @property
    def drag_ratio(self) -> float:
        return self.k_r if self.k_r is not None else self.L * self.zeta_f / self.zeta_h

    @property
    def r(self) -> float:
        return self.ell / self.L

    def eps(self, gamma_ref: float | None = None) -> float:
        g = self.gamma_dot if gamma_ref is None else gamma_ref
        return self.L**4 * g * self.zeta_f / self.K_b

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self, resolved: bool = True) -> dict:
        """Field dictionary; with ``resolved`` the derived fields are filled in."""
        out = dataclasses.asdict(self)
        if resolved:
            out["beta"] = self.body_beta
            out["zeta_r"] = self.rot_drag
            out["k_r"] = self.drag_ratio
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ParameterError(sorted(unknown)[0], data[sorted(unknown)[0]], "unknown parameter")
        return cls(**{k: (None if v is None else float(v)) for k, v in data.items()})


def load_params(path: str | Path) -> PhysicalParams:
    """Read a JSON parameter file; missing fields take the Table-2 defaults."""
    with open(path) as fh:
        return PhysicalParams.from_dict(json.load(fh))


def table2_params(**overrides) -> PhysicalParams:
    """Parameters exactly as tabulated, including the tabulated beta."""
    return PhysicalParams(beta=TABLE2_BETA, **overrides)


@dataclass(frozen=True)
class DimensionlessParams:
    eps: float
    f_p: float
    k_r: float
    r: float
    beta: float
    alpha: float = 2.0

    def __post_init__(self):
        for name in ("eps", "k_r", "r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(name, v)
        if not 0 < self.beta <= 0.5:
            raise ParameterError("beta", self.beta, "must lie in (0, 1/2]")
        if not self.alpha >= 1:
            raise ParameterError("alpha", self.alpha, "must be >= 1")

    @property
    def sigma(self) -> float:
        return 1.0 + 1.5 * self.alpha

    def replace(self, **changes) -> "DimensionlessParams":
        return dataclasses.replace(self, **changes)


def nondimensionalize(p: PhysicalParams, gamma_ref: float | None = None) -> DimensionlessParams:
    """Map physical constants onto the dimensionless groups of the model.

    ``gamma_ref`` replaces ``p.gamma_dot`` as the time scale, which is how
    quiescent-flow runs are scaled.
    """
    g = p.gamma_dot if gamma_ref is None else gamma_ref
    if not g > 0:
        raise ParameterError("gamma_dot", g, "a positive (reference) shear rate is required")
    return DimensionlessParams(
        eps=p.L**4 * g * p.zeta_f / p.K_b,
        f_p=p.F_p / (p.zeta_f * g * p.L),
        k_r=p.drag_ratio,
        r=p.ell / p.L,
        beta=p.body_beta,
        alpha=p.alpha,
    )


@dataclass(frozen=True)
class BackgroundFlow:
    """Planar shear ``u = (gamma_dot * y, 0)`` or a fluid at rest.

    In the dimensionless system the shear rate is one, so ``gamma_dot`` only
    records the dimensional rate used for scaling.
    """

    kind: str = "planar_shear"
    gamma_dot: float = 1.0

    def __post_init__(self):
        if self.kind not in ("planar_shear", "quiescent"):
            raise ValueError(f"unknown flow kind {self.kind!r}")

    @property
    def shear(self) -> float:
        return 1.0 if self.kind == "planar_shear" else 0.0

    def velocity(self, x: float, y: float) -> np.ndarray:
        return np.array([self.shear * y, 0.0])

    @classmethod
    def quiescent(cls) -> "BackgroundFlow":
        return cls("quiescent", 0.0)


@dataclass(frozen=True)
class SwimmerState:
    """Body pose and gridded flagellum fields, all dimensionless.

    ``theta``, ``lam`` and ``n_stress`` are sampled on a uniform grid of
    ``s`` in [0, 1]; ``theta[0]`` is the body angle.
    """

    theta0: float
    center: tuple[float, float]
    theta: np.ndarray
    lam: np.ndarray
    n_stress: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return len(self.theta)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, len(self.theta))


def format_float(x: float) -> str:
    """Locale-free, round-trippable float formatting used in all CSV output."""
    return repr(float(x))


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    """Write ``rows`` with a header line, '.' decimals and '\\n' line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            format_float(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
