"""JSON experiment configuration: validation and construction of grids,
nonlinearities, builtin fields and control schedules."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import ControlSchedule, Nonlinearity
from .field_core import Grid, ScalarField, make_grid, read_field_csv

__all__ = ["ConfigError", "load_config", "resolve_config", "build_grid", "build_nonlinearity",
           "build_field", "build_control"]


class ConfigError(ValueError):
    pass


TOP_LEVEL = {
    "grid": None,
    "nonlinearity": {"kind": "zero", "L": 0.0},
    "initial": None,
    "target": None,
    "initial_b": None,
    "control": None,
    "dt": None,
    "T": None,
    "eps": None,
    "seed": 0,
    "output_dir": None,
    "snapshots": [],
    "reaction_only": False,
    "oracle": {},
    "sweep": {},
    "verify": {},
}
GRID_KEYS = {"dim", "n", "length"}
NONLINEARITY_KEYS = {"kind", "L", "c"}
ORACLE_KEYS = {"tolerance", "K"}
SWEEP_KEYS = {"parameter", "values"}
VERIFY_KEYS = {"suite", "cases", "fabricate_scale", "tol"}

FIELD_KEYS = {
    "zero": set(),
    "constant": {"value"},
    "eigenmode": {"k", "amplitude"},
    "sine_mix": {"coefficients"},
    "product_bump": {"amplitude", "cos_k", "cos_depth"},
    "raised_cosine": {"center", "width", "amplitude"},
    "scaled": {"of", "factor"},
    "csv": {"path"},
}
CONTROL_KEYS = {
    "constant": {"value"},
    "steps": {"breakpoints", "values"},
    "log_ratio": set(),
    "synthesized": set(),
}


def _reject_unknown(section: str, given: dict, allowed: set):
    extra = set(given) - set(allowed)
    if extra:
        raise ConfigError(f"{section}: unknown keys {sorted(extra)}")


def resolve_config(raw: dict, base_dir: str | Path = ".") -> dict:
    """Validate keys and fill defaults; returns a new dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown("config", raw, set(TOP_LEVEL))
    cfg = copy.deepcopy(TOP_LEVEL)
    cfg.update(copy.deepcopy(raw))
    if cfg["grid"] is None:
        raise ConfigError("config: 'grid' is required")
    _reject_unknown("grid", cfg["grid"], GRID_KEYS)
    _reject_unknown("nonlinearity", cfg["nonlinearity"], NONLINEARITY_KEYS)
    _reject_unknown("oracle", cfg["oracle"], ORACLE_KEYS)
    _reject_unknown("sweep", cfg["sweep"], SWEEP_KEYS)
    _reject_unknown("verify", cfg["verify"], VERIFY_KEYS)
    for key in ("initial", "target", "initial_b"):
        if cfg[key] is not None:
            _check_field_spec(key, cfg[key])
    if cfg["control"] is not None:
        ctl = cfg["control"]
        kind = ctl.get("kind")
        if kind not in CONTROL_KEYS:
            raise ConfigError(f"control: unknown kind {kind!r}")
        _reject_unknown("control", ctl, CONTROL_KEYS[kind] | {"kind"})
        if kind == "steps":
            for i, v in enumerate(ctl.get("values", [])):
                if isinstance(v, dict):
                    _check_field_spec(f"control.values[{i}]", v)
    for key in ("T", "dt", "eps"):
        if cfg[key] is not None and not (isinstance(cfg[key], (int, float)) and cfg[key] > 0):
            raise ConfigError(f"config: {key} must be a positive number, got {cfg[key]!r}")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError(f"config: seed must be a nonnegative integer, got {cfg['seed']!r}")
    cfg["_base_dir"] = str(base_dir)
    return cfg


def _check_field_spec(section: str, spec):
    if isinstance(spec, (int, float)):
        return
    if not isinstance(spec, dict) or spec.get("kind") not in FIELD_KEYS:
        raise ConfigError(f"{section}: field spec needs a kind from {sorted(FIELD_KEYS)}")
    _reject_unknown(section, spec, FIELD_KEYS[spec["kind"]] | {"kind"})
    if spec["kind"] == "scaled":
        _check_field_spec(f"{section}.of", spec.get("of"))


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return resolve_config(raw, path.parent)


def build_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    try:
        return make_grid(g.get("dim", 1), g["n"], g.get("length", 1.0))
    except KeyError:
        raise ConfigError("grid: 'n' is required") from None
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def build_nonlinearity(cfg: dict) -> Nonlinearity:
    spec = cfg["nonlinearity"]
    kind = spec.get("kind", "zero")
    try:
        if kind == "linear":
            c = float(spec.get("c", 0.0))
            return Nonlinearity.linear(c, spec.get("L"))
        return Nonlinearity(kind, float(spec.get("L", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"nonlinearity: {exc}") from None


def build_field(spec: Any, grid: Grid, base_dir: str | Path = ".") -> ScalarField:
    """Builtin field vocabulary.

    ``eigenmode``      ``A prod sin(k pi x / L)``
    ``sine_mix``       ``sum_k a_k prod sin(k pi x / L)``
    ``product_bump``   ``A prod [x(L - x)/L^2 (1 + depth cos(k pi x / L))]``
    ``raised_cosine``  ``A (1 + cos(pi r / w)) / 2`` for ``r = |x - center| < w``
    ``scaled``         ``factor * <of>``
    ``csv``            field file with a ``# grid`` header
    """
    if isinstance(spec, (int, float)):
        return ScalarField.constant(grid, float(spec))
    kind = spec["kind"]
    mesh = grid.mesh()
    lengths = grid.lengths
    if kind == "zero":
        return ScalarField.zeros(grid)
    if kind == "constant":
        return ScalarField.constant(grid, float(spec["value"]))
    if kind == "eigenmode":
        k = spec.get("k", 1)
        ks = [k] * grid.dim if np.isscalar(k) else list(k)
        vals = float(spec.get("amplitude", 1.0)) * np.ones(grid.shape)
        for x, ell, kk in zip(mesh, lengths, ks):
            vals = vals * np.sin(kk * np.pi * x / ell)
        return ScalarField(grid, vals)
    if kind == "sine_mix":
        vals = np.zeros(grid.shape)
        for k, a in enumerate(spec["coefficients"], start=1):
            term = np.ones(grid.shape)
            for x, ell in zip(mesh, lengths):
                term = term * np.sin(k * np.pi * x / ell)
            vals += float(a) * term
        return ScalarField(grid, vals)
    if kind == "product_bump":
        k = float(spec.get("cos_k", 0.0))
        depth = float(spec.get("cos_depth", 1.0 if k else 0.0))
        vals = float(spec.get("amplitude", 1.0)) * np.ones(grid.shape)
        for x, ell in zip(mesh, lengths):
            vals = vals * (x * (ell - x) / ell**2) * (1 + depth * np.cos(k * np.pi * x / ell))
        return ScalarField(grid, vals)
    if kind == "raised_cosine":
        center = spec.get("center", [ell / 2 for ell in lengths])
        center = [center] * grid.dim if np.isscalar(center) else list(center)
        width = float(spec.get("width", 0.25 * min(lengths)))
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(mesh, center)))
        vals = np.where(r < width, 0.5 * (1 + np.cos(np.pi * r / width)), 0.0)
        return ScalarField(grid, float(spec.get("amplitude", 1.0)) * vals)
    if kind == "scaled":
        return float(spec.get("factor", 1.0)) * build_field(spec["of"], grid, base_dir)
    if kind == "csv":
        path = Path(spec["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        try:
            return read_field_csv(path, grid)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"csv field: {exc}") from None
    raise ConfigError(f"unknown field kind {kind!r}")


def build_control(cfg: dict, grid: Grid, T: float) -> ControlSchedule:
    """Explicit schedules only (``constant`` or ``steps``)."""
    ctl = cfg["control"]
    if ctl is None:
        raise ConfigError("config: an explicit 'control' is required")
    kind = ctl["kind"]
    if kind == "constant":
        return ControlSchedule.constant(grid, float(ctl.get("value", 0.0)), T)
    if kind == "steps":
        bps = [float(t) for t in ctl["breakpoints"]]
        values = ctl["values"]
        if not math.isclose(bps[-1], T, rel_tol=1e-12) or bps[0] != 0.0:
            raise ConfigError(f"control breakpoints must run from 0 to T={T}, got {bps}")
        try:
            return ControlSchedule(tuple(bps), tuple(build_field(v, grid, cfg["_base_dir"]) for v in values))
        except ValueError as exc:
            raise ConfigError(f"control: {exc}") from None
    raise ConfigError(f"control kind {kind!r} is not an explicit schedule")


def public_config(cfg: dict) -> dict:
    """Resolved config without internal keys, for manifests."""
    return {k: v for k, v in cfg.items() if not k.startswith("_")}
