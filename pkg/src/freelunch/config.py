"""Flat ``key = value`` run configuration.

Blank lines and text after ``#`` are ignored. Every key is optional; the
defaults describe the trapped-ion system at T = 60 K with a coherent state
n = 1, theta = 0. ``scenario`` selects a preset for the three scenario
flags, and explicit flag keys override it regardless of line order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .model import SCENARIOS, ParameterError, QuantumStateSpec, ScenarioFlags, SystemParams, validate_params

MODES = ("analytic", "montecarlo", "sweep", "validate")
SWEEP_VARS = ("tau", "n", "r", "theta", "T")
SCALES = ("linear", "log")

PARAM_KEYS = ("m", "M", "Gamma", "omega_x", "omega_y", "zpf_y", "zpf_noise", "g", "T")
STATE_KEYS = ("n", "theta", "r", "phi")
FLAG_KEYS = ("thermal_noise", "quantum_noise", "initial_condition")


class ConfigError(ValueError):
    """Configuration text could not be turned into a valid RunConfig."""


@dataclass(frozen=True)
class SweepAxis:
    var: str = "tau"
    min: float = 1e-5
    max: float = 1e-3
    points: int = 400
    scale: str = "log"

    def values(self):
        if self.points == 1:
            return np.array([self.min])
        if self.scale == "log":
            return np.geomspace(self.min, self.max, self.points)
        return np.linspace(self.min, self.max, self.points)


@dataclass(frozen=True)
class RunConfig:
    mode: str = "analytic"
    params: SystemParams = field(default_factory=SystemParams)
    state: QuantumStateSpec = field(default_factory=QuantumStateSpec)
    flags: ScenarioFlags = field(default_factory=ScenarioFlags.full)
    tau: float = 1e-4
    sweep: SweepAxis = field(default_factory=SweepAxis)
    N: int = 20000
    seed: int = 0
    out: str = "out"
    mc: bool = False
    svg: bool = False
    steps_per_period: int = 128

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def _float(text):
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _int(text):
    try:
        return int(text, 0)
    except ValueError:
        pass
    value = float(text)  # accepts forms like 2e4
    if not value.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _optional_float(text):
    return None if text.lower() == "none" else _float(text)


PARSERS = {
    "mode": _choice(MODES),
    **{k: _float for k in PARAM_KEYS},
    "zpf_noise": _optional_float,
    **{k: _float for k in STATE_KEYS},
    "scenario": _choice(tuple(SCENARIOS)),
    "thermal_noise": _bool,
    "quantum_noise": _bool,
    "initial_condition": _choice(("thermal", "zero")),
    "tau": _float,
    "sweep_var": _choice(SWEEP_VARS),
    "sweep_min": _float,
    "sweep_max": _float,
    "sweep_points": _int,
    "sweep_scale": _choice(SCALES),
    "N": _int,
    "seed": _int,
    "out": str,
    "mc": _bool,
    "svg": _bool,
    "steps_per_period": _int,
}


def parse_config(text: str) -> RunConfig:
    """Parse config text; errors name the offending line and key."""
    values = {}
    where = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: key {key!r} repeated (first on line {where[key]})")
        try:
            values[key] = PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        where[key] = lineno
    return _build(values, where)


def _located(where, key):
    return f"line {where[key]}: " if key in where else ""


def _build(values, where) -> RunConfig:
    try:
        params = SystemParams(**{k: values[k] for k in PARAM_KEYS if k in values})
        validate_params(params)
    except ParameterError as exc:
        msgs = [f"{_located(where, name)}{name}: {msg}" for name, msg in exc.problems]
        raise ConfigError("; ".join(msgs)) from None
    try:
        state = QuantumStateSpec(**{k: values[k] for k in STATE_KEYS if k in values})
    except ParameterError as exc:
        msgs = [f"{_located(where, name)}{name}: {msg}" for name, msg in exc.problems]
        raise ConfigError("; ".join(msgs)) from None

    flags = SCENARIOS[values.get("scenario", "full")]()
    overrides = {k: values[k] for k in FLAG_KEYS if k in values}
    flags = replace(flags, **overrides)

    tau = values.get("tau", RunConfig.tau)
    if not (np.isfinite(tau) and tau > 0):
        raise ConfigError(f"{_located(where, 'tau')}tau: must be > 0, got {tau!r}")

    axis = SweepAxis()
    axis = replace(
        axis,
        var=values.get("sweep_var", axis.var),
        min=values.get("sweep_min", axis.min),
        max=values.get("sweep_max", axis.max),
        points=values.get("sweep_points", axis.points),
        scale=values.get("sweep_scale", axis.scale),
    )
    if axis.points < 1:
        raise ConfigError(f"{_located(where, 'sweep_points')}sweep_points: must be >= 1")
    if axis.max < axis.min:
        raise ConfigError(f"{_located(where, 'sweep_max')}sweep_max: must be >= sweep_min")
    if axis.scale == "log" and axis.min <= 0:
        raise ConfigError(f"{_located(where, 'sweep_min')}sweep_min: log sweeps need a positive minimum")

    N = values.get("N", RunConfig.N)
    if N < 2:
        raise ConfigError(f"{_located(where, 'N')}N: must be >= 2")
    seed = values.get("seed", RunConfig.seed)
    if not 0 <= seed < 2**64:
        raise ConfigError(f"{_located(where, 'seed')}seed: must be an unsigned 64-bit integer")
    spp = values.get("steps_per_period", RunConfig.steps_per_period)
    if spp < 64:
        raise ConfigError(f"{_located(where, 'steps_per_period')}steps_per_period: must be >= 64")

    return RunConfig(
        mode=values.get("mode", RunConfig.mode),
        params=params,
        state=state,
        flags=flags,
        tau=tau,
        sweep=axis,
        N=N,
        seed=seed,
        out=values.get("out", RunConfig.out),
        mc=values.get("mc", RunConfig.mc),
        svg=values.get("svg", RunConfig.svg),
        steps_per_period=spp,
    )


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


def echo(config: RunConfig) -> str:
    """Fully resolved config text; parsing it gives back an equal RunConfig."""
    items = [("mode", config.mode)]
    items += [(k, getattr(config.params, k)) for k in PARAM_KEYS]
    items += [(k, getattr(config.state, k)) for k in STATE_KEYS]
    items += [(f.name, getattr(config.flags, f.name)) for f in fields(config.flags)]
    items += [
        ("tau", config.tau),
        ("sweep_var", config.sweep.var),
        ("sweep_min", config.sweep.min),
        ("sweep_max", config.sweep.max),
        ("sweep_points", config.sweep.points),
        ("sweep_scale", config.sweep.scale),
        ("N", config.N),
        ("seed", config.seed),
        ("out", config.out),
        ("mc", config.mc),
        ("svg", config.svg),
        ("steps_per_period", config.steps_per_period),
    ]
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items)
