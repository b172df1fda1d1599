"""Run configuration: parsing, validation and hashing.

Configs are flat ``key = value`` files with ``[section]`` headers (a TOML
subset).  Every key is checked against the schema below; unknown keys,
wrong types and out-of-range values are schema violations.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .basis import ModelParams
from .errors import ConfigurationError, UnsupportedRegimeError
from .nonlinearity import NonlinearitySpec
from .solver import SolverConfig

__all__ = [
    "EXPERIMENTS",
    "SCHEMA",
    "RunConfig",
    "ConfigFileMissing",
    "SchemaError",
    "parse_config",
    "config_from_dict",
    "defaults_text",
]

EXPERIMENTS = ("simulate", "truncation-study", "verify-estimates", "conserve",
               "stability", "blowup", "basis-check")
CRITICAL_ONLY = ("truncation-study", "verify-estimates", "stability", "blowup")


class ConfigFileMissing(ConfigurationError):
    pass


class SchemaError(ConfigurationError):
    pass


_NUM = (int, float)

# section -> key -> (types, default, help); default None means "unset"
SCHEMA = {
    "": {
        "experiment": (str, "simulate", "one of " + ", ".join(EXPERIMENTS)),
        "seed": (int, 0, "seed for random data and verifier samples"),
        "output_dir": (str, "runs", "directory for summary.json, report.txt and CSVs"),
    },
    "model": {
        "n": (int, 2, "complex dimension (1 or 2)"),
        "K": (int, 3, "per-coordinate cutoff on mu_j and nu_j"),
        "grid_order": (int, None, "Gauss-Hermite nodes per real axis (default 2K+2)"),
    },
    "nonlinearity": {
        "lam": (_NUM, 1.0, "coupling; > 0 defocusing, < 0 focusing"),
        "alpha": (_NUM, None, "power; default 2/(n-1), required when n = 1"),
        "m": (int, 4, "truncation level (0 = untruncated)"),
    },
    "solver": {
        "t0": (_NUM, 0.0, "initial time"),
        "T": (_NUM, 0.5, "horizon length"),
        "n_steps": (int, 64, "time steps (even, >= 4)"),
        "tol_fixed_point": (_NUM, 1e-10, "Picard stopping tolerance in L^gamma(I, L^rho)"),
        "max_iter": (int, 60, "Picard iteration cap"),
        "delta": (_NUM, 0.1, "smallness parameter"),
        "scheme": (str, "splitstep", "picard or splitstep"),
        "direction": (int, 1, "+1 forward, -1 backward in time"),
    },
    "data": {
        "kind": (str, "random", "random or ground (amplitude * Phi_0)"),
        "amplitude": (_NUM, 0.5, "L^2 norm of the initial datum"),
        "decay": (_NUM, 2.0, "spectral decay exponent of random data"),
    },
    "study": {
        "m_schedule": (list, [1, 2, 4, 8], "truncation levels for truncation-study"),
        "epsilon_list": (list, [0.1, 0.01, 0.001], "perturbation sizes for stability"),
        "m_list": (list, [1, 4, 16, 64], "truncation levels for verify-estimates"),
        "samples": (int, 20, "random samples per verifier"),
        "sample_amplitude_max": (_NUM, 2.0, "largest L^2 amplitude of verifier samples"),
        "gap_amplitude": (_NUM, 40.0, "L^2 amplitude of truncation-gap samples"),
        "blowup_threshold": (_NUM, 1e3, "running-norm level flagged as growth"),
    },
    "assert": {
        "enabled": (bool, True, "turn the experiment's assertions on or off"),
        "charge_drift": (_NUM, 1e-10, "max relative charge drift (conserve, simulate)"),
        "orthonormality": (_NUM, 1e-8, "max Gram residual (basis-check)"),
        "slope_margin": (_NUM, 0.2, "allowed excess over the target decay slope"),
        "spread": (_NUM, 3.0, "max ratio spread (stability)"),
        "m_spread": (_NUM, 2.0, "max fitted-constant spread across m"),
    },
}


@dataclass
class RunConfig:
    model: ModelParams
    nonlinearity: NonlinearitySpec
    solver: SolverConfig
    experiment: str
    output_dir: str
    seed: int
    data: dict = field(default_factory=dict)
    study: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _type_ok(value, types):
    if types is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    return isinstance(value, types)


def _normalize(doc):
    """Check keys and types; return a flat dict {'section.key': value} with defaults."""
    out = {}
    for sec, keys in SCHEMA.items():
        given = doc if sec == "" else doc.get(sec, {})
        if sec and not isinstance(given, dict):
            raise SchemaError(f"{sec}: expected a section")
        for key, (types, default, _) in keys.items():
            path = key if sec == "" else f"{sec}.{key}"
            if key in given:
                value = given[key]
                if not _type_ok(value, types):
                    raise SchemaError(f"{path}: wrong type {type(value).__name__}")
                if types is list:
                    if not value or not all(_type_ok(v, _NUM) for v in value):
                        raise SchemaError(f"{path}: expected a non-empty list of numbers")
                out[path] = value
            else:
                out[path] = default
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise SchemaError(f"unknown section [{key}]")
            for sub in value:
                if sub not in SCHEMA[key]:
                    raise SchemaError(f"unknown key {key}.{sub}")
        elif key not in SCHEMA[""]:
            raise SchemaError(f"unknown key {key}")
    return out


def config_from_dict(doc: dict) -> RunConfig:
    flat = _normalize(doc)
    exp = flat["experiment"]
    if exp not in EXPERIMENTS:
        raise SchemaError(f"experiment: unknown value {exp!r}")
    try:
        model = ModelParams(flat["model.n"], flat["model.K"], flat["model.grid_order"])
    except ConfigurationError as exc:
        raise SchemaError(f"model: {exc}") from None
    n = model.n
    if n == 1 and exp in CRITICAL_ONLY:
        raise UnsupportedRegimeError(f"experiment {exp!r} needs the critical regime n >= 2")
    alpha = flat["nonlinearity.alpha"]
    if alpha is None and n == 1 and exp != "basis-check":
        raise UnsupportedRegimeError("nonlinearity.alpha must be set when n = 1 (2/(n-1) is undefined)")
    try:
        spec = NonlinearitySpec(lam=float(flat["nonlinearity.lam"]),
                                alpha=None if alpha is None else float(alpha),
                                m=flat["nonlinearity.m"])
        if n >= 2:
            spec = spec.for_dimension(n)
        solver = SolverConfig(
            t0=float(flat["solver.t0"]), T=float(flat["solver.T"]), n_steps=flat["solver.n_steps"],
            tol_fixed_point=float(flat["solver.tol_fixed_point"]), max_iter=flat["solver.max_iter"],
            delta=float(flat["solver.delta"]), scheme=flat["solver.scheme"],
            direction=flat["solver.direction"])
    except ConfigurationError as exc:
        raise SchemaError(str(exc)) from None
    if flat["data.kind"] not in ("random", "ground"):
        raise SchemaError(f"data.kind: unknown value {flat['data.kind']!r}")
    if not (flat["data.amplitude"] >= 0 and math.isfinite(flat["data.amplitude"])):
        raise SchemaError("data.amplitude must be finite and >= 0")
    for key in ("study.m_schedule", "study.m_list"):
        ms = flat[key]
        if any(int(m) != m or m < 1 for m in ms) or any(b <= a for a, b in zip(ms, ms[1:])):
            raise SchemaError(f"{key}: expected increasing positive integers")
    if any(e < 0 for e in flat["study.epsilon_list"]):
        raise SchemaError("study.epsilon_list: entries must be >= 0")
    if flat["study.samples"] < 1:
        raise SchemaError("study.samples must be >= 1")

    def section(name):
        return {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith(name + ".")}

    return RunConfig(model=model, nonlinearity=spec, solver=solver, experiment=exp,
                     output_dir=flat["output_dir"], seed=flat["seed"],
                     data=section("data"), study=section("study"), checks=section("assert"),
                     raw=flat)


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigFileMissing(f"config file not found: {p}")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(f"{p}: {exc}") from None
    return config_from_dict(doc)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return repr(value)


def defaults_text() -> str:
    """The default configuration as a commented config file."""
    lines = []
    for sec, keys in SCHEMA.items():
        if sec:
            lines += ["", f"[{sec}]"]
        for key, (_, default, help_) in keys.items():
            if default is None:
                lines.append(f"# {key} = ...   # {help_}")
            else:
                lines.append(f"{key} = {_fmt(default)}   # {help_}")
    return "\n".join(lines) + "\n"
