"""Run configuration: TOML files, dotted overrides, validation."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .evolution import SolverConfig, gamma_window
from .nonlinearity import DEFAULT_DELTA0, NonlinearityParams, is_admissible_R, min_admissible_R
from .oscillator import MATCHING_TARGET, SigmaModel
from .spectral import Grid

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class Experiment(str, Enum):
    ZETA = "zeta"
    PROPAGATE = "propagate"
    EVOLVE = "evolve"
    SCATTER = "scatter"
    CLASSIFY = "classify"
    LEIBNIZ = "leibniz"
    SWEEP = "sweep"
    ACCEPTANCE = "acceptance"


DEFAULTS: dict = {
    "experiment": "zeta",
    "out": "runs/out",
    "seed": 0,
    "model": {"kind": "matched", "r0": 10.0, "matching_target": MATCHING_TARGET},
    "params": {"mu_L": 1.0, "mu_S": 0.0, "theta": 0.0, "R": "min", "delta0": DEFAULT_DELTA0,
               "n": 1},
    "solver": {"dt0": 0.01, "t_max": 1000.0, "epsilon_prime": 1e-3, "gamma": 1.0,
               "snapshots_per_decade": 40, "t_first_snapshot": 1.0, "adaptive": True,
               "store_fields": False},
    "grid": {"N": 32768, "L": 6000.0},
    "profile_grid": {"N": 1024, "L": 32.0},
    "initial": {"width": 1.0, "center": 0.0, "k0": 0.0, "amplitude": None},
    "zeta": {"t_max": 1000.0, "tol": 1e-10, "points": 2001},
    "propagate": {"t_min": 100.0, "t_max": 1e5, "count": 31, "N_out": 8192},
    "scatter": {"convention": "single", "ablation": True, "compare_mode": "loglog"},
    "classify": {"s0": math.e, "S_max": 1e300, "divergence_bound": 1e6,
                 "theta3": [4.0, 3.8, 3.6, 3.4]},
    "leibniz": {"gammas": [0.75, 1.5, 2.5], "corpus": 50, "N": 512, "L": 32.0},
    "sweep": {"axis": "solver.epsilon_prime", "values": [], "experiment": "evolve"},
    "acceptance": {"only": []},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_value(text: str) -> Any:
    """Parse an override right-hand side as a TOML value (bare words stay strings)."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(tree: dict, assignment: str) -> dict:
    """Apply ``section.key=value`` to a nested dict (returns a copy)."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    path, value = assignment.split("=", 1)
    return set_path(tree, path.strip(), parse_value(value.strip()))


def set_path(tree: dict, path: str, value: Any) -> dict:
    out = copy.deepcopy(tree)
    keys = path.split(".")
    node = out
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(path, "unknown section")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(path, "unknown key")
    node[keys[-1]] = value
    return out


def get_path(tree: dict, path: str) -> Any:
    node = tree
    for k in path.split("."):
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(path, "unknown key")
        node = node[k]
    return node


def smooth_from_spec(spec) -> Any:
    """Inner part of the canonical model: a number, or ``{a0, a1, omega}`` for
    ``a0 + a1 cos(omega t)``."""
    if isinstance(spec, (int, float)):
        return float(spec)
    a0, a1, om = float(spec.get("a0", 0.0)), float(spec.get("a1", 0.0)), float(spec.get("omega", 1.0))
    return lambda t: a0 + a1 * np.cos(om * np.asarray(t, float))


@dataclass
class RunConfig:
    """Validated configuration; ``raw`` is the merged tree it came from."""

    raw: dict
    experiment: Experiment
    model: SigmaModel
    params: NonlinearityParams
    solver: SolverConfig
    grid: Grid
    profile_grid: Grid
    out: Path
    seed: int
    sections: dict = field(default_factory=dict)

    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _require(cond, fld, msg):
    if not cond:
        raise ConfigError(fld, msg)


def build_model(m: dict) -> SigmaModel:
    kind = m.get("kind")
    r0 = m.get("r0", 10.0)
    _require(isinstance(r0, (int, float)) and r0 > 0, "model.r0", "must be a positive number")
    if kind == "zero":
        return SigmaModel.zero(r0)
    if kind == "constant":
        _require("alpha" in m, "model.alpha", "required for the constant model")
        return SigmaModel.constant(float(m["alpha"]), r0)
    if kind == "matched":
        return SigmaModel.matched(float(r0), m.get("alpha"),
                                   target=float(m.get("matching_target", MATCHING_TARGET)))
    if kind == "canonical":
        _require("smooth" in m, "model.smooth", "required for the canonical model")
        spec = m["smooth"]
        return SigmaModel.canonical(float(r0), smooth_from_spec(spec),
                                    smooth_spec=spec if isinstance(spec, dict) else None)
    raise ConfigError("model.kind", f"unknown kind {kind!r}")


def build_params(p: dict) -> NonlinearityParams:
    n = p.get("n", 1)
    _require(n in (1, 2, 3), "params.n", "must be 1, 2 or 3")
    theta = float(p.get("theta", 0.0))
    _require(0 <= theta < 1, "params.theta", "must lie in [0, 1)")
    d0 = float(p.get("delta0", DEFAULT_DELTA0))
    _require(0 < d0 < 1, "params.delta0", "must lie in (0, 1)")
    R = p.get("R", "min")
    if R == "min":
        R = min_admissible_R(d0)
    else:
        R = float(R)
        _require(R > 0, "params.R", "must be positive")
        ok = all(is_admissible_R(R, d0, th) for th in np.linspace(0, 1, 11))
        _require(ok, "params.R", f"R={R:g} is not admissible at delta0={d0}")
    return NonlinearityParams(float(p.get("mu_L", 1.0)), float(p.get("mu_S", 0.0)), theta, R, d0,
                              int(n), check_R=False)


def build_grid(g: dict, n: int, name: str) -> Grid:
    N, L = g.get("N"), g.get("L")
    _require(isinstance(N, int) and N >= 16 and not N & (N - 1), f"{name}.N",
             "must be a power of two >= 16")
    _require(isinstance(L, (int, float)) and L > 0, f"{name}.L", "must be positive")
    return Grid(n, N, float(L))


def build_solver(s: dict, n: int) -> SolverConfig:
    lo, hi, incl = gamma_window(n)
    gamma = float(s.get("gamma", 1.0))
    _require(lo < gamma and (gamma <= hi if incl else gamma < hi), "solver.gamma",
             f"must lie in ({lo}, {hi}{']' if incl else ')'} for n={n}")
    for key in ("dt0", "t_max", "epsilon_prime"):
        _require(float(s[key]) > 0, f"solver.{key}", "must be positive")
    _require(0 < float(s["t_first_snapshot"]) <= float(s["t_max"]), "solver.t_first_snapshot",
             "must lie in (0, t_max]")
    return SolverConfig(dt0=float(s["dt0"]), t_max=float(s["t_max"]),
                        epsilon_prime=float(s["epsilon_prime"]), gamma=gamma, n=n,
                        snapshots_per_decade=int(s["snapshots_per_decade"]),
                        t_first_snapshot=float(s["t_first_snapshot"]),
                        adaptive=bool(s["adaptive"]), store_fields=bool(s["store_fields"]))


def from_tree(tree: dict) -> RunConfig:
    """Validate a (partial) config tree merged over :data:`DEFAULTS`."""
    unknown = set(tree) - set(DEFAULTS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    raw = _merge(DEFAULTS, tree)
    try:
        exp = Experiment(raw["experiment"])
    except ValueError:
        raise ConfigError("experiment", f"unknown experiment {raw['experiment']!r}") from None
    try:
        model = build_model(raw["model"])
        params = build_params(raw["params"])
        n = params.n
        solver = build_solver(raw["solver"], n)
        grid = build_grid(raw["grid"], n, "grid")
        pgrid = build_grid(raw["profile_grid"], n, "profile_grid")
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("config", str(exc)) from exc
    if exp is Experiment.SWEEP:
        sw = raw["sweep"]
        _require(isinstance(sw["values"], list) and sw["values"], "sweep.values", "must be a non-empty list")
        val = get_path(raw, sw["axis"])
        _require(isinstance(val, (int, float, str)) and not isinstance(val, bool), "sweep.axis",
                 "must name an existing scalar field")
    sections = {k: raw[k] for k in ("initial", "zeta", "propagate", "scatter", "classify",
                                    "leibniz", "sweep", "acceptance")}
    return RunConfig(raw, exp, model, params, solver, grid, pgrid, Path(raw["out"]),
                     int(raw["seed"]), sections)


def load(path=None, overrides=()) -> RunConfig:
    tree = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                tree = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    merged = _merge(DEFAULTS, tree)
    for ov in overrides:
        merged = apply_override(merged, ov)
    return from_tree(merged)


def dump_toml(tree: dict) -> str:
    """Minimal TOML writer for config trees (tables of scalars and lists)."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, float):
            return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf") if math.isinf(v) else "nan"
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{" + ", ".join(f"{k} = {fmt(x)}" for k, x in v.items()) + "}"
        return str(v)

    lines = []
    for k, v in tree.items():
        if not isinstance(v, dict) and v is not None:
            lines.append(f"{k} = {fmt(v)}")
    for k, v in tree.items():
        if isinstance(v, dict):
            lines.append(f"\n[{k}]")
            for kk, vv in v.items():
                if vv is not None:
                    lines.append(f"{kk} = {fmt(vv)}")
    return "\n".join(lines) + "\n"
