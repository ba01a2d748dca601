"""Command-line interface.

``mmfs <command> [--config cfg.json] [--out DIR] [--threads N] [--override a.b=v ...]``

Commands write CSV tables plus a ``metadata.json`` holding the fully
resolved configuration, which can be passed back through ``--config`` to
reproduce the run.  Exit codes: 0 success, 2 configuration or I/O error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (TABLE_COLUMNS, ThresholdNotFound, batch_evaluate,
                          effective_viscosity_asymptotic, viscosity_decrease_threshold)
from .core import (BackgroundFlow, ParameterError, PhysicalParams, nondimensionalize, write_csv)
from .dynamics import SolverConfig, SolverError, initial_state, simulate
from .wall import (OUTCOME_COLUMNS, WallScenario, escape_scan, free_swimmer_oscillation,
                   regime_boundaries, wall_params)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid configuration."""


DEFAULT_CONFIG: dict = {
    "seed": 0,
    "params": {},
    "solver": {"dt": 2e-3, "n": 101, "theta_scheme": "sbdf2"},
    "simulate": {"horizon": 10.0, "theta0": 0.0, "amplitude": 0.01, "sample_dt": 0.1,
                 "flow": "planar_shear", "gamma_ref": None},
    "viscosity": {
        "method": "asymptotic",
        "convention": "kirkwood",
        "K_b": [3e-23, 9e-23],
        "r": {"min": 0.1, "max": 1.0, "steps": 19},
        "eta0": {"min": 1e-3, "max": 1e-2, "steps": 10},
        "beta": {"min": 0.01, "max": 0.5, "steps": 10},
        "numeric_r": [],
        "agreement_tol": 0.1,
    },
    "wall": {
        "params": {},
        "K_b": [],
        "scan": {"min": 1e-24, "max": 1e-22, "steps": 9},
        "boundaries": True,
        "rtol": 0.01,
        "scenario": {},
    },
    "thresholds": {
        "params": {"k_r": 0.5, "beta": 0.0162},
        "K_b": [3e-23, 9e-23],
        "targets": [0.0, -0.1],
        "convention": "table",
        "L_range": [2e-6, 2e-4],
        "numeric": False,
        "numeric_L_range": [4e-6, 2e-5],
        "numeric_scan_points": 4,
    },
    "oscillation": {
        "params": {},
        "K_b": {"min": 5e-25, "max": 5e-23, "steps": 7},
        "horizon": 4.0,
        "amplitude": 0.01,
        "dt": 2e-4,
        "n": 41,
    },
}


# blocks that take any key; they are validated when the objects are built
FREE_BLOCKS = ("params", "scenario", "solver")


# -- configuration -------------------------------------------------------------
def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    free = path.rstrip(".").split(".")[-1] in FREE_BLOCKS
    for k, v in extra.items():
        if k not in out and not free:
            raise ConfigError(f"unknown configuration key {path + k!r}")
        if isinstance(out.get(k), dict) and isinstance(v, dict) and not _is_axis(out[k]):
            out[k] = _merge(out[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _is_axis(v) -> bool:
    return isinstance(v, dict) and set(v) == {"min", "max", "steps"}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, item: str) -> None:
    """Set ``a.b.c=value`` in place; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override {item!r} has an empty key")
    node = cfg
    for i, p in enumerate(parts[:-1]):
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown configuration key {'.'.join(parts[:i + 1])!r}")
        node = node[p]
    leaf = parts[-1]
    free = parts[-2] in FREE_BLOCKS if len(parts) > 1 else False
    if leaf not in node and not free:
        raise ConfigError(f"unknown configuration key {key!r}")
    node[leaf] = _parse_value(text)


def load_config(path: str | None, overrides=()) -> dict:
    """Defaults, then the JSON file (a metadata file is accepted), then overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        if "config" in data and "command" in data:
            data = data["config"]
        cfg = _merge(cfg, data)
    for item in overrides:
        apply_override(cfg, item)
    return cfg


def axis_values(spec, name: str) -> list[float]:
    """Values of a sweep axis given as a list or ``{min, max, steps}`` (geometric when min > 0)."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        vals = [float(spec)]
    elif isinstance(spec, list):
        vals = [float(v) for v in spec]
    elif _is_axis(spec):
        lo, hi, steps = float(spec["min"]), float(spec["max"]), spec["steps"]
        if not isinstance(steps, int) or steps < 1:
            raise ConfigError(f"{name}.steps must be a positive integer")
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise ConfigError(f"{name} needs finite min <= max")
        if steps == 1:
            vals = [lo]
        elif lo > 0:
            vals = [float(v) for v in np.geomspace(lo, hi, steps)]
        else:
            vals = [float(v) for v in np.linspace(lo, hi, steps)]
    else:
        raise ConfigError(f"{name} must be a number, a list or {{min, max, steps}}")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{name} must be non-empty and finite")
    return vals


def physical_params(cfg: dict, block: str | None = None, base: PhysicalParams | None = None) -> PhysicalParams:
    data = dict(cfg["params"])
    if block is not None:
        data.update(cfg[block].get("params", {}))
    p = base or PhysicalParams()
    try:
        return PhysicalParams.from_dict({**p.to_dict(resolved=False), **data})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def solver_config(cfg: dict) -> SolverConfig:
    known = {f.name for f in fields(SolverConfig)}
    extra = set(cfg["solver"]) - known
    if extra:
        raise ConfigError(f"unknown solver setting {sorted(extra)[0]!r}")
    try:
        return SolverConfig(**cfg["solver"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc


def wall_scenario(cfg: dict) -> WallScenario:
    try:
        return WallScenario(**cfg["wall"]["scenario"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"wall.scenario: {exc}") from exc


# -- output ------------------------------------------------------------------
def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(data, sort_keys=True, indent=2, default=_json_default) + "\n")
    return path


def write_metadata(out: Path, command: str, cfg: dict, params: PhysicalParams, files) -> Path:
    return write_json(out / "metadata.json", {
        "command": command,
        "version": __version__,
        "config": cfg,
        "resolved_params": params.to_dict(),
        "files": sorted(Path(f).name for f in files),
    })


def _pool_map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- commands ------------------------------------------------------------------
def cmd_simulate(cfg: dict, out: Path, threads: int = 1) -> list[Path]:
    sc = cfg["simulate"]
    p = physical_params(cfg)
    flow_kind = sc["flow"]
    if flow_kind not in ("planar_shear", "quiescent"):
        raise ConfigError(f"simulate.flow must be planar_shear or quiescent, not {flow_kind!r}")
    gamma_ref = sc["gamma_ref"]
    if flow_kind == "quiescent" and gamma_ref is None:
        gamma_ref = p.gamma_dot if p.gamma_dot > 0 else 0.1
    try:
        d = nondimensionalize(p, gamma_ref)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    flow = BackgroundFlow() if flow_kind == "planar_shear" else BackgroundFlow.quiescent()
    scfg = solver_config(cfg)
    if not sc["horizon"] > 0:
        raise ConfigError("simulate.horizon must be positive")
    st = initial_state(d, float(sc["theta0"]), float(sc["amplitude"]), scfg.n, flow=flow)
    traj = simulate(st, float(sc["horizon"]), d, flow, scfg, sample_dt=sc["sample_dt"])
    files = [traj.to_csv(out / "trajectory.csv", d.eps)]
    files.append(write_metadata(out, "simulate", cfg, p, files))
    return files


def _numeric_point(args):
    from .rheology import effective_viscosity_numeric

    q, scfg = args
    return effective_viscosity_numeric(q, config=scfg)


NUMERIC_COLUMNS = ("r", "L", "eps", "asymptotic_total", "numeric_total", "numeric_prop",
                   "numeric_elastic", "averaging", "difference", "agree")


def cmd_viscosity(cfg: dict, out: Path, threads: int = 1) -> list[Path]:
    vc = cfg["viscosity"]
    method, conv = vc["method"], vc["convention"]
    if method not in ("asymptotic", "numeric", "both"):
        raise ConfigError(f"viscosity.method must be asymptotic, numeric or both, not {method!r}")
    p = physical_params(cfg)
    r_axis = axis_values(vc["r"], "viscosity.r")
    files = []
    try:
        if method in ("asymptotic", "both"):
            kb = axis_values(vc["K_b"], "viscosity.K_b")
            tables = {
                "fig1a_vs_r.csv": batch_evaluate(p, conv, K_b=kb, r=r_axis),
                "fig1b_split_vs_r.csv": batch_evaluate(p, conv, r=r_axis),
                "fig1c_vs_eta0.csv": batch_evaluate(p, conv, eta0=axis_values(vc["eta0"], "viscosity.eta0")),
                "fig1d_vs_beta.csv": batch_evaluate(p, conv, beta=axis_values(vc["beta"], "viscosity.beta")),
            }
            for name, rows in tables.items():
                files.append(write_csv(out / name, TABLE_COLUMNS, rows))
        if method in ("numeric", "both"):
            if not p.gamma_dot > 0:
                raise ConfigError("numeric viscosity needs gamma_dot > 0; use method=asymptotic, "
                                  "whose propulsion term has a finite zero-shear limit")
            rs = axis_values(vc["numeric_r"], "viscosity.numeric_r") if vc["numeric_r"] else [p.r]
            qs = [p.replace(L=p.ell / r) for r in rs]
            reports = _pool_map(_numeric_point, [(q, solver_config(cfg)) for q in qs], threads)
            rows = []
            for q, rep in zip(qs, reports):
                a = effective_viscosity_asymptotic(q, conv).total
                diff = rep.total - a
                ok = abs(diff) <= vc["agreement_tol"] * max(abs(a), abs(rep.total), 1e-12)
                rows.append([q.r, q.L, q.eps(), a, rep.total, rep.eta_propulsion, rep.eta_elastic,
                             rep.averaging, diff, str(ok).lower()])
            files.append(write_csv(out / "numeric_vs_asymptotic.csv", list(NUMERIC_COLUMNS), rows))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    files.append(write_metadata(out, "viscosity", cfg, p, files))
    return files


def cmd_wall(cfg: dict, out: Path, threads: int = 1) -> list[Path]:
    wc = cfg["wall"]
    p = physical_params(cfg, "wall", base=wall_params())
    scenario = wall_scenario(cfg)
    files = []
    if wc["K_b"]:
        ks = axis_values(wc["K_b"], "wall.K_b")
    else:
        ks = axis_values(wc["scan"], "wall.scan")
    outcomes = escape_scan(ks, scenario, p, threads)
    files.append(write_csv(out / "wall_outcomes.csv", list(OUTCOME_COLUMNS), (o.row() for o in outcomes)))
    if wc["boundaries"] and not wc["K_b"]:
        sc = wc["scan"]
        b = regime_boundaries((float(sc["min"]), float(sc["max"])), scenario, p, int(sc["steps"]),
                              float(wc["rtol"]), threads)
        files.append(write_json(out / "wall_boundaries.json", b.to_dict()))
    files.append(write_metadata(out, "wall", cfg, p, files))
    return files


THRESHOLD_COLUMNS = ("K_b", "target", "L_asymptotic", "r_asymptotic", "eps_asymptotic",
                     "L_numeric", "r_numeric", "eps_numeric")


def _numeric_threshold(args):
    from .rheology import numeric_threshold

    q, target, L_range, points, scfg = args
    try:
        return numeric_threshold(q, target, "L", tuple(L_range), points, config=scfg)
    except ThresholdNotFound:
        return None


def cmd_thresholds(cfg: dict, out: Path, threads: int = 1) -> list[Path]:
    tc = cfg["thresholds"]
    p = physical_params(cfg, "thresholds")
    kbs = axis_values(tc["K_b"], "thresholds.K_b")
    targets = axis_values(tc["targets"], "thresholds.targets")
    jobs = [(k, t) for k in kbs for t in targets]
    asym = []
    for k, t in jobs:
        try:
            asym.append(viscosity_decrease_threshold(p.replace(K_b=k), "L", t, tuple(tc["L_range"]),
                                                     tc["convention"]))
        except ThresholdNotFound:
            asym.append(None)
    if tc["numeric"]:
        # the simulation uses the drag ratio implied by L, not the tabulated one
        q0 = physical_params(cfg)
        num = _pool_map(_numeric_threshold,
                        [(q0.replace(K_b=k), t, tc["numeric_L_range"], int(tc["numeric_scan_points"]),
                          solver_config(cfg)) for k, t in jobs], threads)
    else:
        num = [None] * len(jobs)
    rows = []
    for (k, t), a, n in zip(jobs, asym, num):
        row = [k, t]
        for th in (a, n):
            row += [th.L, th.r, th.eps] if th is not None else ["", "", ""]
        rows.append(row)
    files = [write_csv(out / "thresholds.csv", list(THRESHOLD_COLUMNS), rows)]
    files.append(write_metadata(out, "thresholds", cfg, p, files))
    return files


def _oscillation_point(args):
    k, p, oc = args
    return free_swimmer_oscillation(k, p, float(oc["horizon"]), float(oc["amplitude"]),
                                    float(oc["dt"]), int(oc["n"]))


def cmd_oscillation(cfg: dict, out: Path, threads: int = 1) -> list[Path]:
    oc = cfg["oscillation"]
    p = physical_params(cfg, "oscillation", base=wall_params())
    ks = sorted(axis_values(oc["K_b"], "oscillation.K_b"))
    results = _pool_map(_oscillation_point, [(k, p, oc) for k in ks], threads)
    files = [write_csv(out / "oscillation.csv", ["K_b", "class", "amplitude"],
                       ([r.K_b, r.kind, r.amplitude] for r in results))]
    files.append(write_metadata(out, "oscillation", cfg, p, files))
    return files


COMMANDS = {
    "simulate": cmd_simulate,
    "viscosity": cmd_viscosity,
    "wall": cmd_wall,
    "thresholds": cmd_thresholds,
    "oscillation": cmd_oscillation,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate one swimmer and write its trajectory",
        "viscosity": "effective-viscosity tables (asymptotic and/or simulated)",
        "wall": "escape-from-wall outcomes over a bending-stiffness scan",
        "thresholds": "flagellum lengths where the viscosity change crosses 0 and -10%",
        "oscillation": "late-time normal-stress oscillations of a free swimmer",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", help="JSON configuration (a metadata.json is accepted)")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a configuration entry by dot path, e.g. params.K_b=1e-23")
        if name == "viscosity":
            sp.add_argument("--method", choices=("asymptotic", "numeric", "both"),
                            help="shortcut for --override viscosity.method=...")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        overrides = list(args.override)
        if getattr(args, "method", None):
            overrides.append(f"viscosity.method={json.dumps(args.method)}")
        cfg = load_config(args.config, overrides)
        files = COMMANDS[args.command](cfg, Path(args.out), args.threads)
    except (ConfigError, ParameterError) as exc:
        print(f"mmfs: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        where = exc.filename or args.out
        print(f"mmfs: cannot write {where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"mmfs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
