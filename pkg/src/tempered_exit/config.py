"""JSON run configuration: schema, presets, merging and conversion to model objects.

Precedence, lowest first: built-in defaults, ``--preset``, the ``--config``
file, then individual command-line flags.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .expr import Expr, from_descriptor, parse
from .process_model import AngularDensity, Ball, LevelSetDomain, ModelParams, SimulationMode

_NUM_OR_TEXT = {"type": ["number", "string"]}
_EXPR = {"type": ["number", "string", "object"]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number"},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "dim": {"enum": [2, 3]},
                "angular": {
                    "oneOf": [
                        {"enum": ["uniform", "three_piece", "half_split"]},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["pieces"],
                            "properties": {
                                "pieces": {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {"type": "array", "minItems": 3, "maxItems": 3, "items": _NUM_OR_TEXT},
                                }
                            },
                        },
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["theta_edges", "phi_edges", "density"],
                            "properties": {
                                "theta_edges": {"type": "array", "items": _NUM_OR_TEXT},
                                "phi_edges": {"type": "array", "items": _NUM_OR_TEXT},
                                "density": {"type": "array", "items": {"type": "array", "items": _NUM_OR_TEXT}},
                            },
                        },
                    ]
                },
                "c_norm": {"type": ["number", "null"]},
                "mode": {"enum": ["timestep", "cp_event"]},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "b_trunc": {"type": "number", "exclusiveMinimum": 0},
                "epsilon": {"type": ["number", "null"]},
                "drift_correction": {"type": "boolean"},
                "reject_negative": {"type": "boolean"},
                "max_steps": {"type": "integer", "minimum": 1},
                "attempt_cap": {"type": "integer", "minimum": 1},
            },
        },
        "domain": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "radius"],
                    "properties": {
                        "kind": {"const": "ball"},
                        "center": {"type": "array", "items": {"type": "number"}},
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "level", "bounding_radius"],
                    "properties": {
                        "kind": {"const": "level_set"},
                        "level": {"type": "string"},
                        "center": {"type": "array", "items": {"type": "number"}},
                        "bounding_radius": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            ]
        },
        "x0": {"type": ["array", "null"], "items": {"type": "number"}},
        "g": _EXPR,
        "f": {"type": ["number", "string", "object", "null"]},
        "growth_check": {"type": ["number", "null"]},
        "n": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "histogram": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "which": {"enum": ["tau", "pos", "both"]},
                "bins": {"type": "integer", "minimum": 1},
                "tau_range": {"type": ["array", "null"], "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "pos_range": {"type": ["array", "null"], "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "tail_from": {"type": ["number", "null"]},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ids": {"type": "array", "items": {"type": "string"}},
                "times": {"type": "array", "items": {"type": "number"}},
                "xi": {"type": "array", "items": {"type": "number"}},
                "q": {"type": "array", "items": {"type": "number"}},
                "c2": {"type": ["number", "null"]},
                "beta": {"type": ["number", "null"]},
            },
        },
        "converge": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_list": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "repeats": {"type": "integer", "minimum": 1},
                "truth": {"type": ["number", "null"]},
                "dump_errors": {"type": "boolean"},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"out_dir": {"type": "string"}},
        },
    },
}

# keys that do not change any emitted number and so stay out of provenance headers
NON_RESULT_KEYS = ("workers", "outputs")

DEFAULTS = {
    "model": {
        "alpha": 0.7,
        "lambda": 0.5,
        "dim": 2,
        "angular": "uniform",
        "c_norm": None,
        "mode": "timestep",
        "dt": 5e-4,
        "b_trunc": 10.0,
        "epsilon": None,
        "drift_correction": True,
        "reject_negative": False,
        "max_steps": 10**7,
        "attempt_cap": 10**6,
    },
    "domain": {"kind": "ball", "radius": 1.0},
    "x0": None,
    "g": {"builtin": "linear", "coeffs": [1.0, 1.0], "offset": 0.0},
    "f": None,
    "growth_check": None,
    "n": 10_000,
    "seed": 0,
    "workers": 1,
    "histogram": {"which": "tau", "bins": 60, "tau_range": None, "pos_range": None, "tail_from": None},
    "verify": {"ids": [], "times": [1.0, 2.0], "xi": [0.5, 1.0, 2.0], "q": [0.5, 1.0, 2.0], "c2": None, "beta": None},
    "converge": {"n_list": [250, 500, 1000, 2000, 4000], "repeats": 50, "truth": None, "dump_errors": False},
    "outputs": {"out_dir": "."},
}

PRESETS = {
    # Dirichlet problem with exact solution x1 + x2
    "dirichlet": {
        "model": {"alpha": 1.2, "lambda": 0.05, "angular": "three_piece", "mode": "timestep", "dt": 5e-4, "b_trunc": 10.0},
        "domain": {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
        "x0": [-0.2, 0.9],
        "g": "x1 + x2",
        "f": None,
        "n": 10_000,
        "converge": {"truth": 0.7},
    },
    # exit-time and exit-position densities from the origin of the unit disc
    "exit_pdf": {
        "model": {"alpha": 1.2, "lambda": 0.01, "angular": "half_split", "mode": "timestep", "dt": 5e-4, "b_trunc": 10.0},
        "domain": {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
        "x0": [0.0, 0.0],
        "n": 150_000,
        "histogram": {"which": "both"},
    },
    # event-driven scenario for the bound checks
    "theorems": {
        "model": {"alpha": 0.7, "lambda": 0.5, "mode": "cp_event", "epsilon": 0.3, "angular": "uniform"},
        "domain": {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
        "x0": [0.0, 0.0],
        "n": 100_000,
    },
}

NAMED_DENSITIES = {
    "three_piece": [["0", "pi/2", "1/(3*pi)"], ["pi/2", "pi", "1/pi"], ["pi", "2*pi", "1/(3*pi)"]],
    "half_split": [["0", "pi", "1/(4*pi)"], ["pi", "2*pi", "3/(4*pi)"]],
}


# values replaced wholesale instead of merged key by key
_ATOMIC = ("g", "f", "angular", "domain")


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in _ATOMIC:
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None


def load_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    validate(data)
    return data


def resolve(preset: str | None = None, file_cfg: dict | None = None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = deep_merge(cfg, PRESETS[preset])
    if file_cfg:
        cfg = deep_merge(cfg, file_cfg)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    dim = cfg["model"]["dim"]
    cfg["domain"].setdefault("center", [0.0] * dim)
    if cfg["x0"] is None:
        cfg["x0"] = [0.0] * dim
    validate(cfg)
    return cfg


def provenance(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in NON_RESULT_KEYS}


def _number(v) -> float:
    if isinstance(v, (int, float)):
        return float(v)
    expr = parse(v)
    if not expr.is_constant():
        raise ConfigError(f"{v!r} must be a constant expression")
    return float(expr.evaluate(()))


def build_angular(spec, dim: int) -> AngularDensity:
    if spec == "uniform":
        return AngularDensity.uniform(dim)
    if isinstance(spec, str):
        if dim != 2:
            raise ConfigError(f"angular preset {spec!r} is two-dimensional")
        spec = {"pieces": NAMED_DENSITIES[spec]}
    if "pieces" in spec:
        if dim != 2:
            raise ConfigError("angular pieces describe a 2-d density")
        return AngularDensity.piecewise([[_number(v) for v in row] for row in spec["pieces"]])
    if dim != 3:
        raise ConfigError("angular cells describe a 3-d density")
    return AngularDensity.cells(
        [_number(v) for v in spec["theta_edges"]],
        [_number(v) for v in spec["phi_edges"]],
        [[_number(v) for v in row] for row in spec["density"]],
    )


def build_params(cfg: dict) -> ModelParams:
    m = cfg["model"]
    angular = build_angular(m["angular"], m["dim"])
    try:
        return ModelParams(
            alpha=float(m["alpha"]), lam=float(m["lambda"]), dim=m["dim"], angular=angular,
            c_norm=m["c_norm"], mode=SimulationMode(m["mode"]), dt=float(m["dt"]),
            b_trunc=float(m["b_trunc"]), epsilon=m["epsilon"], drift_correction=m["drift_correction"],
            reject_negative=m["reject_negative"], max_steps=m["max_steps"], attempt_cap=m["attempt_cap"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_domain(cfg: dict):
    d = cfg["domain"]
    center = tuple(d.get("center") or [0.0] * cfg["model"]["dim"])
    if d["kind"] == "ball":
        return Ball(center, d["radius"])
    return LevelSetDomain(parse(d["level"]), d["bounding_radius"], center)


def build_expr(desc) -> Expr | None:
    if desc is None:
        return None
    try:
        return from_descriptor(desc)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad expression descriptor {desc!r}: {exc}") from None


@dataclass(frozen=True)
class Run:
    """Everything a subcommand needs, built from a resolved config."""

    cfg: dict
    params: ModelParams
    domain: object
    x0: tuple[float, ...]

    @classmethod
    def from_config(cls, cfg: dict) -> "Run":
        params = build_params(cfg)
        domain = build_domain(cfg)
        x0 = tuple(float(v) for v in cfg["x0"])
        if len(x0) != params.dim or domain.dim != params.dim:
            raise ConfigError("x0, domain and model dimensions differ")
        if any(not math.isfinite(v) for v in x0):
            raise ConfigError("x0 must be finite")
        return cls(cfg, params, domain, x0)
