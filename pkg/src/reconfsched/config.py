"""Experiment configuration files, sweep expansion and bundled presets.

A config is one JSON document::

    {
      "name": "example",
      "params":  {"n": 8, "delta_r": 167, "horizon": 200000, "warmup": 20000},
      "traffic": {"kind": "uniform", "rho": 0.6},
      "policy":  {"kind": "adaptive", "base": {"kind": "maxweight"}, "gamma": 0.1, "delta": 0.01},
      "seeds":   [1, 2, 3],
      "sweep":   {"rho": [0.3, 0.6]}
    }

Sweep axes ``delta``/``gamma`` act on adaptive policies, ``T`` on FFMW and
``W`` on TMS; a policy that does not use an axis runs once for it.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .core import ContractError
from .engine import SimParams, run_streams
from .policies import PolicySpec
from .traffic import load, nonuniform_rates, rate_matrix, read_matrix_csv, uniform_rates

AXES = ("policy", "rho", "delta_r", "delta_m", "delta", "gamma", "T", "W")

_policy_schema = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["maxweight", "adaptive", "pipelined_maxweight", "tassiulas_random", "hamiltonian",
                          "max_size", "ffmw", "vfmw", "tms"]},
        "base": {"$ref": "#/$defs/policy"},
        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "delta": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "K": {"type": "integer", "minimum": 0},
        "T": {"type": "integer", "minimum": 1},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "W": {"type": "integer", "minimum": 1},
        "Q": {"type": "integer", "minimum": 1},
        "label": {"type": "string"},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"policy": _policy_schema},
    "type": "object",
    "required": ["params", "traffic", "policy"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "params": {
            "type": "object",
            "required": ["n", "horizon"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "delta_r": {"type": "integer", "minimum": 0},
                "delta_m": {"type": "integer", "minimum": 0},
                "monitor_interval": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 1},
                "warmup": {"type": "integer", "minimum": 0},
                "queue_capacity": {"type": ["integer", "null"], "minimum": 0},
                "trace": {"type": "boolean"},
            },
        },
        "traffic": {
            "oneOf": [
                {"type": "object", "required": ["kind", "rho"], "additionalProperties": False,
                 "properties": {"kind": {"const": "uniform"}, "rho": {"type": "number"}}},
                {"type": "object", "required": ["kind", "rho", "M"], "additionalProperties": False,
                 "properties": {"kind": {"const": "nonuniform"}, "rho": {"type": "number"},
                                "M": {"type": "integer", "minimum": 1}}},
                {"type": "object", "required": ["kind", "path"], "additionalProperties": False,
                 "properties": {"kind": {"const": "csv"}, "path": {"type": "string"}}},
            ]
        },
        "policy": {"$ref": "#/$defs/policy"},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "output": {"type": ["string", "null"]},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "policy": {"type": "array", "items": {"$ref": "#/$defs/policy"}, "minItems": 1},
                "rho": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "delta_r": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "delta_m": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "delta": {"type": "array", "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                          "minItems": 1},
                "gamma": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                     "exclusiveMaximum": 1}, "minItems": 1},
                "T": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "W": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
        },
    },
}


class ConfigError(ContractError):
    """Invalid configuration; ``where`` points at the offending line or field."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True)
class TrafficSpec:
    kind: str
    rho: Optional[float] = None
    M: Optional[int] = None
    path: Optional[str] = None

    def matrix(self, n: int, seed: int) -> np.ndarray:
        """Rate matrix for this traffic description. Loads of 1 or more are built too, so the
        caller can report them through :func:`admissible`."""
        if self.kind in ("uniform", "nonuniform"):
            rho = self.rho
            scale = 1.0
            if rho is not None and rho >= 1.0:
                rho, scale = 0.5, rho / 0.5
            if self.kind == "uniform":
                lam = uniform_rates(n, rho)
            else:
                lam = nonuniform_rates(n, rho, self.M, run_streams(seed)[2])
            return rate_matrix(lam * scale)
        lam = rate_matrix(read_matrix_csv(self.path))
        if lam.shape != (n, n):
            raise ContractError(f"{self.path}: rate matrix is {lam.shape}, expected {(n, n)}")
        return lam

    def to_dict(self) -> dict:
        keys = {"uniform": ("rho",), "nonuniform": ("rho", "M"), "csv": ("path",)}[self.kind]
        return {"kind": self.kind, **{k: getattr(self, k) for k in keys}}


@dataclass(frozen=True)
class ExperimentConfig:
    params: SimParams
    traffic: TrafficSpec
    policy: PolicySpec
    seeds: tuple[int, ...] = (0,)
    sweep: dict = field(default_factory=dict)
    name: str = ""
    description: str = ""
    output: Optional[str] = None

    def to_dict(self) -> dict:
        p = self.params
        out: dict[str, Any] = {}
        if self.name:
            out["name"] = self.name
        if self.description:
            out["description"] = self.description
        out["params"] = {
            "n": p.n, "delta_r": p.delta_r, "delta_m": p.delta_m, "monitor_interval": p.monitor_interval,
            "horizon": p.horizon, "warmup": p.warmup, "queue_capacity": p.queue_capacity, "trace": p.trace,
        }
        out["traffic"] = self.traffic.to_dict()
        out["policy"] = self.policy.to_dict()
        out["seeds"] = list(self.seeds)
        if self.sweep:
            out["sweep"] = {k: [v.to_dict() for v in vals] if k == "policy" else list(vals)
                            for k, vals in self.sweep.items()}
        if self.output is not None:
            out["output"] = self.output
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @property
    def seed(self) -> int:
        return self.seeds[0]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seeds=(seed,), params=replace(self.params, seed=seed))


def _line_of(text: str, path) -> str:
    """Best-effort ``line N`` for a JSON path: the first line naming its last key."""
    keys = [k for k in path if isinstance(k, str)]
    if not keys:
        return ""
    pattern = re.compile(r'"' + re.escape(keys[-1]) + r'"\s*:')
    for lineno, line in enumerate(text.splitlines(), 1):
        if pattern.search(line):
            return f"line {lineno}"
    return ""


def parse_config(text: str, source: str = "<config>", base_dir: Optional[Path] = None) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, f"{source}: line {exc.lineno} column {exc.colno}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        field_path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        line = _line_of(text, list(err.absolute_path))
        where = f"{source}: field {field_path}" + (f" ({line})" if line else "")
        raise ConfigError(err.message, where)
    return from_dict(raw, source, base_dir)


def from_dict(raw: dict, source: str = "<config>", base_dir: Optional[Path] = None) -> ExperimentConfig:
    try:
        seeds = tuple(raw.get("seeds", [0]))
        params = SimParams(**raw["params"], seed=seeds[0])
        traffic = TrafficSpec(**raw["traffic"])
        if traffic.kind == "csv" and base_dir is not None and not Path(traffic.path).is_absolute():
            traffic = replace(traffic, path=str(Path(base_dir) / traffic.path))
        policy = PolicySpec.from_dict(raw["policy"])
        sweep = {}
        for axis in AXES:
            if axis in raw.get("sweep", {}):
                vals = raw["sweep"][axis]
                sweep[axis] = tuple(PolicySpec.from_dict(v) for v in vals) if axis == "policy" else tuple(vals)
        if len(set(seeds)) != len(seeds):
            raise ContractError("seeds must be distinct")
    except ContractError as exc:
        raise ConfigError(str(exc), source) from None
    return ExperimentConfig(params=params, traffic=traffic, policy=policy, seeds=seeds, sweep=sweep,
                            name=raw.get("name", ""), description=raw.get("description", ""),
                            output=raw.get("output"))


def load_config(path) -> ExperimentConfig:
    """Read a config file, or a bundled preset when ``path`` names one."""
    p = Path(path)
    if not p.exists() and str(path) in preset_names():
        return parse_config(preset_text(str(path)), f"preset {path}")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(exc.strerror or str(exc), str(path)) from None
    return parse_config(text, str(path), p.parent)


# --- presets ------------------------------------------------------------------------


def _preset_dir():
    return resources.files("reconfsched") / "presets"


def preset_names() -> list[str]:
    return sorted(f.name[:-5] for f in _preset_dir().iterdir() if f.name.endswith(".json"))


def preset_text(name: str) -> str:
    f = _preset_dir() / f"{name}.json"
    if not f.is_file():
        raise ConfigError(f"no preset named {name!r}")
    return f.read_text()


# --- sweeps -------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    """One run of a sweep. ``index`` orders rows: axis positions, then seed."""

    index: tuple
    policy: PolicySpec
    params: SimParams
    traffic: TrafficSpec
    labels: dict

    def rates(self) -> np.ndarray:
        return self.traffic.matrix(self.params.n, self.params.seed)


def _uses(spec: PolicySpec, axis: str) -> bool:
    base = spec.base if spec.kind == "adaptive" else spec
    if axis in ("delta", "gamma"):
        return spec.kind == "adaptive"
    if axis == "T":
        return base.kind == "ffmw"
    if axis == "W":
        return base.kind == "tms"
    return True


def _apply(spec: PolicySpec, axis: str, value) -> PolicySpec:
    if axis in ("delta", "gamma"):
        return spec.replace(**{axis: float(value)})
    if spec.kind == "adaptive":
        return spec.replace(base=spec.base.replace(**{axis: int(value)}))
    return spec.replace(**{axis: int(value)})


def expand(cfg: ExperimentConfig) -> list[SweepPoint]:
    """Cartesian product of the sweep axes and seeds, in row order."""
    policies = cfg.sweep.get("policy", (cfg.policy,))
    axes = [a for a in AXES[1:] if a in cfg.sweep]
    points = []
    seen = set()
    for p_idx, spec0 in enumerate(policies):
        for combo in itertools.product(*(range(len(cfg.sweep[a])) for a in axes)):
            spec, params, traffic = spec0, cfg.params, cfg.traffic
            labels: dict[str, Any] = {}
            index = [p_idx]
            for axis, k in zip(axes, combo):
                value = cfg.sweep[axis][k]
                if axis == "rho":
                    if traffic.kind == "csv":
                        raise ConfigError("a rho axis needs uniform or nonuniform traffic")
                    traffic = replace(traffic, rho=float(value))
                elif axis in ("delta_r", "delta_m"):
                    params = replace(params, **{axis: int(value)})
                elif _uses(spec, axis):
                    spec = _apply(spec, axis, value)
                else:
                    k = -1
                index.append(k)
            key = tuple(index)
            if key in seen:
                continue
            seen.add(key)
            labels.update(_labels(spec, params, traffic))
            for seed in cfg.seeds:
                points.append(SweepPoint(key + (seed,), spec, replace(params, seed=seed), traffic,
                                         {**labels, "seed": seed}))
    points.sort(key=lambda pt: pt.index)
    return points


def _labels(spec: PolicySpec, params: SimParams, traffic: TrafficSpec) -> dict:
    base = spec.base if spec.kind == "adaptive" else spec
    return {
        "policy": spec.name,
        "rho": traffic.rho if traffic.rho is not None else "",
        "delta_r": params.delta_r,
        "delta_m": params.delta_m,
        "delta": spec.delta if spec.kind == "adaptive" else "",
        "gamma": spec.gamma if spec.kind == "adaptive" else "",
        "T": base.T if base.kind == "ffmw" else "",
        "W": base.W if base.kind == "tms" else "",
    }


def admissible(lam) -> tuple[bool, float]:
    rho = load(lam)
    return rho < 1.0, rho
