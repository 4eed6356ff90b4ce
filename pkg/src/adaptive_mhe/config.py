"""Experiment configuration: a sectioned key = value file with a typed schema.

Every key has a declared type and default. Unknown sections or keys are
rejected, and values are validated by building the objects they configure.
``dump_config(load_config(text))`` reproduces the same key set and values.
"""
from __future__ import annotations

import configparser
import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .bench import ScenarioSpec
from .disturbance import DEG, NoiseSpec
from .mhe import EstimatorVariant, SolverOptions, StageCostParams
from .vehicle import PathSpec, VehicleParams


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and the constraint."""


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _parse_ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _parse_strs(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


PARSERS = {"float": float, "int": int, "bool": _parse_bool, "str": str,
           "floats": _parse_floats, "ints": _parse_ints, "strs": _parse_strs}

_NOISE_KEYS = {
    "sigma_beta": ("float", DEG),
    "sigma_theta": ("float", 0.2 * DEG),
    "sigma_xy": ("float", 0.025),
    "outlier_prob": ("float", 0.1),
    "outlier_scale": ("float", 10.0),
    "outlier_channels": ("ints", (2, 3)),
    "simultaneous": ("bool", True),
}

SCHEMA = {
    "vehicle": {
        "hitch_length": ("float", 1.5),
        "sample_time": ("float", 0.1),
        "v_max": ("float", 1.5),
        "omega_max": ("float", 1.0),
        "a_max": ("float", 0.5),
        "lookahead": ("float", 1.0),
    },
    "path": {
        "row_length": ("float", 40.0),
        "row_spacing": ("float", 6.0),
        "speed": ("float", 1.0),
    },
    "noise.normal": dict(_NOISE_KEYS),
    "noise.uniform": dict(_NOISE_KEYS),
    "cost": {
        "delta": ("floats", (1.0, 1.0, 1.0, 1.0)),
        "gamma": ("floats", (0.1, 0.1, 0.1, 0.1)),
        "c": ("float", 1.0),
        "w_weight": ("float", 1e6),
        "w_bound": ("float", 0.01),
        "residual_lower": ("floats", (-0.1, -0.1, -math.inf, -math.inf)),
        "residual_upper": ("floats", (0.1, 0.1, math.inf, math.inf)),
        "penalty_weight": ("float", 1e6),
    },
    "estimator": {
        "horizon": ("int", 10),
        "prior_weight": ("float", 10.0),
        "startup_weight": ("float", 0.01),
        "epsilon": ("float", 1e-3),
        "solver_tol": ("float", 1e-8),
        "solver_ftol": ("float", 1e-13),
        "solver_max_iter": ("int", 200),
        "alpha_tol": ("float", 1e-10),
    },
    "variants": {
        "names": ("strs", ("prop_m10", "prop_m3", "grid_m3", "fixed")),
    },
    "bench": {
        "trials": ("int", 100),
        "full_scale": ("bool", False),
        "full_scale_trials": ("int", 1000),
        "duration": ("float", 60.0),
        "seed": ("int", 0),
        "initial_sigma": ("float", 3.0),
        "scenarios": ("strs", ("normal", "uniform")),
        "out": ("str", "results"),
        "workers": ("int", 1),
        "dump": ("bool", False),
    },
}

VARIANT_SCHEMA = {
    "kind": ("str", "adaptive"),
    "alpha0": ("float", 1.5),
    "grid": ("floats", (1.1, 1.5, 1.8)),
    "max_iterations": ("int", 10),
}

DEFAULT_VARIANTS = {
    "prop_m10": {"kind": "adaptive", "max_iterations": 10},
    "prop_m3": {"kind": "adaptive", "max_iterations": 3},
    "grid_m3": {"kind": "grid", "grid": (1.1, 1.5, 1.8)},
    "fixed": {"kind": "fixed", "alpha0": 1.5},
}


@dataclass
class Config:
    """Typed configuration values, ``section -> key -> value``."""
    values: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    def copy(self):
        return Config(copy.deepcopy(self.values))

    def set(self, dotted, value):
        """Set ``section.key`` (the section may itself contain a dot)."""
        section, _, key = dotted.rpartition(".")
        if section not in self.values or key not in self.values[section]:
            raise ConfigError(f"unknown key {dotted!r}")
        kind = _schema_for(section)[key][0]
        self.values[section][key] = _coerce(kind, value, dotted)

    def variant_names(self):
        return list(self.values["variants"]["names"])


def _schema_for(section):
    if section.startswith("variant."):
        return VARIANT_SCHEMA
    if section in SCHEMA:
        return SCHEMA[section]
    raise ConfigError(f"unknown section [{section}]")


def _coerce(kind, value, where):
    try:
        if isinstance(value, str):
            return PARSERS[kind](value)
        if kind in ("floats", "ints", "strs"):
            conv = {"floats": float, "ints": int, "strs": str}[kind]
            return tuple(conv(v) for v in value)
        return {"float": float, "int": int, "bool": bool, "str": str}[kind](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected {kind} ({exc})") from None


def default_config():
    values = {sec: {k: v for k, (_, v) in keys.items()} for sec, keys in SCHEMA.items()}
    for name, overrides in DEFAULT_VARIANTS.items():
        sec = {k: v for k, (_, v) in VARIANT_SCHEMA.items()}
        sec.update(overrides)
        values[f"variant.{name}"] = sec
    cfg = Config(values)
    validate(cfg)
    return cfg


def parse_config(text, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = default_config()
    for section in parser.sections():
        schema = _schema_for(section)
        if section.startswith("variant.") and section not in cfg.values:
            cfg.values[section] = {k: v for k, (_, v) in VARIANT_SCHEMA.items()}
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {section}.{key}")
            cfg.values[section][key] = _coerce(schema[key][0], raw, f"{section}.{key}")
    validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: Config):
    lines = []
    for section, keys in cfg.values.items():
        lines.append(f"[{section}]")
        for key, value in keys.items():
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)


# --- builders -----------------------------------------------------------------

def _build(where, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def vehicle_params(cfg):
    return _build("vehicle", VehicleParams, **cfg["vehicle"])


def path_spec(cfg):
    return _build("path", PathSpec, **cfg["path"])


def noise_spec(cfg, scenario):
    section = f"noise.{scenario}"
    if section not in cfg.values:
        raise ConfigError(f"bench.scenarios: unknown scenario {scenario!r}")
    return _build(section, NoiseSpec, kind=scenario, **cfg[section])


def cost_params(cfg):
    c = dict(cfg["cost"])
    for key in ("delta", "gamma", "residual_lower", "residual_upper"):
        if len(c[key]) != 4:
            raise ConfigError(f"cost.{key}: expected 4 values, one per measurement channel")
    w = c.pop("w_weight")
    if not w > 0:
        raise ConfigError("cost.w_weight: must be positive")
    return _build("cost", StageCostParams, W=w * np.eye(7), **c)


def variant(cfg, name):
    section = f"variant.{name}"
    if section not in cfg.values:
        raise ConfigError(f"variants.names: no section [{section}]")
    v = cfg[section]
    return _build(section, EstimatorVariant, kind=v["kind"], alpha0=v["alpha0"],
                  grid=tuple(v["grid"]), max_iterations=v["max_iterations"],
                  epsilon=cfg["estimator"]["epsilon"], name=name)


def solver_options(cfg):
    e = cfg["estimator"]
    return _build("estimator", SolverOptions, tol=e["solver_tol"], ftol=e["solver_ftol"],
                  max_iter=e["solver_max_iter"], alpha_tol=e["alpha_tol"])


def trial_count(cfg):
    b = cfg["bench"]
    return b["full_scale_trials"] if b["full_scale"] else b["trials"]


def scenario_spec(cfg, scenario):
    e, b = cfg["estimator"], cfg["bench"]
    names = cfg.variant_names()
    if not names:
        raise ConfigError("variants.names: at least one variant is required")
    for key in ("prior_weight", "startup_weight"):
        if not e[key] > 0:
            raise ConfigError(f"estimator.{key}: must be positive")
    if b["workers"] < 1:
        raise ConfigError("bench.workers: must be >= 1")
    return _build("bench", ScenarioSpec, name=scenario, noise=noise_spec(cfg, scenario),
                  path=path_spec(cfg), vehicle=vehicle_params(cfg), cost=cost_params(cfg),
                  variants=tuple(variant(cfg, n) for n in names), horizon=e["horizon"],
                  prior_weight=e["prior_weight"], startup_weight=e["startup_weight"],
                  trials=trial_count(cfg), duration=b["duration"], seed=b["seed"],
                  initial_sigma=b["initial_sigma"], options=solver_options(cfg))


def validate(cfg: Config):
    """Build every configured object once so invalid values fail at load time."""
    for scenario in cfg["bench"]["scenarios"]:
        scenario_spec(cfg, scenario)
