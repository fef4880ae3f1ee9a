"""Experiment configuration files (TOML).

Rates are given in units of the one-photon loss rate, with keys ending in
``_over_gamma``; gamma itself is then 1.  Setting ``model.units = "raw"``
switches to absolute keys (``delta``, ``kerr_u``, ``loss_gamma``, ...), which
is how gamma = 0 systems are described; values are then reported in units of
``loss_eta``.

Example::

    [lattice]
    n_sites = 3

    [model]
    delta_over_gamma = -10.0
    kerr_u_over_gamma = 10.0
    hop_j_over_gamma = -10.0
    loss_eta_over_gamma = 1.0
    pump_g_over_gamma = 20.0

    [truncation]
    schedule = [[12, 18], [14, 21]]

    [sweep]
    axis = "pump_g"
    values = [5.0, 10.0, 20.0]
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import tomli

from .hilbert import LatticeSpec, TruncationSpec
from .liouvillian import ModelParams
from .steady_state import METHODS, SolverConfig

__all__ = ["ConfigError", "SweepConfig", "load_config", "parse_config", "apply_overrides"]

AXES = ("pump_g", "drive_f_magnitude")
PHASE_RULES = ("fixed", "lock_to_alpha0")

_SCALED_KEYS = {
    "delta": "delta_over_gamma",
    "kerr_u": "kerr_u_over_gamma",
    "hop_j": "hop_j_over_gamma",
    "loss_eta": "loss_eta_over_gamma",
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class SweepConfig:
    lattice: LatticeSpec
    params: ModelParams
    schedule: list[TruncationSpec]
    solver: SolverConfig
    axis: str = "pump_g"
    values: list[float] = field(default_factory=list)
    phase_rule: str = "fixed"
    drive_phase: float = 0.0
    observable_tol: float = 1e-3
    warm_start: bool = True
    unit_rate: float = 1.0
    csv_name: str = "records.csv"
    json_name: str = "summary.json"
    raw: dict = field(default_factory=dict)
    text: str = ""

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _number(sec: dict, key: str, default: float | None = None) -> float:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    value = sec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key!r} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{key!r} must be finite")
    return float(value)


def _model(sec: dict) -> tuple[ModelParams, float]:
    units = sec.get("units", "gamma")
    if units == "gamma":
        kw = {name: _number(sec, key, 0.0) for name, key in _SCALED_KEYS.items()}
        if "loss_eta_over_gamma" not in sec:
            kw["loss_eta"] = 1.0
        g = complex(_number(sec, "pump_g_over_gamma", 0.0), _number(sec, "pump_g_over_gamma_im", 0.0))
        f = complex(_number(sec, "drive_f_over_gamma_re", 0.0), _number(sec, "drive_f_over_gamma_im", 0.0))
        params = ModelParams(loss_gamma=1.0, pump_g=g, drive_f=f, **kw)
        unit = 1.0
    elif units == "raw":
        kw = {name: _number(sec, name, 0.0) for name in ("delta", "kerr_u", "hop_j", "loss_gamma", "loss_eta")}
        g = complex(_number(sec, "pump_g", 0.0), _number(sec, "pump_g_im", 0.0))
        f = complex(_number(sec, "drive_f_re", 0.0), _number(sec, "drive_f_im", 0.0))
        params = ModelParams(pump_g=g, drive_f=f, **kw)
        unit = params.loss_gamma if params.loss_gamma > 0 else params.loss_eta
    else:
        raise ConfigError(f"model.units must be 'gamma' or 'raw', got {units!r}")
    if not params.dissipative:
        raise ConfigError("at least one of the loss rates must be positive")
    return params, unit


def _schedule(sec: dict) -> list[TruncationSpec]:
    if "schedule" in sec:
        levels = sec["schedule"]
        if not isinstance(levels, list) or not levels:
            raise ConfigError("truncation.schedule must be a nonempty list of [N_m, N_mT] pairs")
        try:
            out = [TruncationSpec(int(a), int(b)) for a, b in levels]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad truncation.schedule: {exc}") from exc
    else:
        try:
            out = [TruncationSpec(int(sec["n_max_per_mode"]), int(sec["n_max_total"]))]
        except KeyError as exc:
            raise ConfigError(f"truncation needs 'schedule' or {exc}") from exc
    for t in out:
        if t.n_max_per_mode < 1 or t.n_max_total < 1:
            raise ConfigError("cutoffs must be at least 1")
    for lo, hi in zip(out, out[1:]):
        if not (hi.n_max_per_mode > lo.n_max_per_mode and hi.n_max_total > lo.n_max_total):
            raise ConfigError("truncation.schedule must increase strictly in both cutoffs")
    return out


def _solver(sec: dict) -> SolverConfig:
    allowed = set(SolverConfig.__dataclass_fields__)
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
    if sec.get("method", "iterative") not in METHODS:
        raise ConfigError(f"solver.method must be one of {METHODS}")
    try:
        return SolverConfig(**sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(data: dict, text: str = "", require_truncation: bool = True) -> SweepConfig:
    lat = _section(data, "lattice")
    try:
        n_sites = int(lat.get("n_sites", 2))
        if "edges" in lat:
            lattice = LatticeSpec(n_sites, tuple(tuple(e) for e in lat["edges"]))
        else:
            lattice = LatticeSpec.default(n_sites)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad lattice: {exc}") from exc
    try:
        params, unit = _model(_section(data, "model"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    trunc = _section(data, "truncation")
    schedule = _schedule(trunc) if (trunc or require_truncation) else []
    solver = _solver(_section(data, "solver"))
    sweep = _section(data, "sweep")
    axis = sweep.get("axis", "pump_g")
    if axis not in AXES:
        raise ConfigError(f"sweep.axis must be one of {AXES}")
    if "values" in sweep:
        values = sweep["values"]
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep.values must be a nonempty list")
        try:
            values = [float(v) for v in values]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sweep.values: {exc}") from exc
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("sweep.values must be finite")
    else:
        values = []
    phase_rule = sweep.get("phase_rule", "fixed")
    if phase_rule not in PHASE_RULES:
        raise ConfigError(f"sweep.phase_rule must be one of {PHASE_RULES}")
    out = _section(data, "output")
    return SweepConfig(
        lattice=lattice,
        params=params,
        schedule=schedule,
        solver=solver,
        axis=axis,
        values=values,
        phase_rule=phase_rule,
        drive_phase=_number(sweep, "drive_phase", 0.0),
        observable_tol=_number(trunc, "observable_tol", 1e-3),
        warm_start=bool(sweep.get("warm_start", True)),
        unit_rate=unit,
        csv_name=str(out.get("csv", "records.csv")),
        json_name=str(out.get("json", "summary.json")),
        raw=copy.deepcopy(data),
        text=text,
    )


def _parse_value(text: str) -> Any:
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """Apply ``section.key=value`` strings; values use TOML syntax, bare words are strings."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"bad override key {key!r}")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = _parse_value(value.strip())
    return data


def load_config(path: str | Path | None, overrides: Sequence[str] = (),
                require_truncation: bool = True) -> SweepConfig:
    text = ""
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if overrides:
        data = apply_overrides(data, overrides)
        text = text + "".join(f"\n# override: {o}" for o in overrides)
    return parse_config(data, text, require_truncation)
