"""Experiment configuration: a YAML file with a strict published schema.

Configs are nested key-value text with comments, so runs are diffable
and archivable.  Validation happens before any computation: unknown keys
are rejected and every diagnostic names the offending key path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from . import funcs
from .cpp_green import ExponentialJumps, GaussianJumps, GridSpec
from .paths import BmSpec, CppSpec, FbmSpec, ProcessSpec


class ConfigError(ValueError):
    pass


_NUMERIC = (int, float)


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"missing required key '{path}{key}'")
    return cfg[key]


def _check_keys(cfg: dict, allowed: set[str], path: str):
    if not isinstance(cfg, dict):
        raise ConfigError(f"section '{path.rstrip('.')}' must be a mapping")
    for k in cfg:
        if k not in allowed:
            raise ConfigError(f"unknown key '{path}{k}'")


def _number(cfg: dict, key: str, path: str, default=None, positive=False):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key '{path}{key}'")
        return default
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, _NUMERIC):
        raise ConfigError(f"key '{path}{key}' must be a number")
    if positive and v <= 0:
        raise ConfigError(f"key '{path}{key}' must be positive")
    return float(v)


def _integer(cfg: dict, key: str, path: str, default=None, minimum=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key '{path}{key}'")
        return default
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"key '{path}{key}' must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"key '{path}{key}' must be >= {minimum}")
    return v


def _vector(cfg: dict, key: str, path: str, d: int, default=None):
    if key not in cfg:
        return default if default is not None else (0.0,) * d
    v = cfg[key]
    if not isinstance(v, list) or not all(isinstance(a, _NUMERIC) for a in v):
        raise ConfigError(f"key '{path}{key}' must be a list of numbers")
    if len(v) != d:
        raise ConfigError(f"key '{path}{key}' must have length {d}")
    return tuple(float(a) for a in v)


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return raw


_FUNCTION_KEYS = {
    "gaussian": {"family", "amplitude", "width", "shift"},
    "bump": {"family", "radius", "amplitude", "shift"},
    "gaussian_density": {"family", "variance", "shift"},
    "mixture": {"family", "components", "shift"},
    "zero": {"family"},
}


def _build_single(cfg: dict, d: int, path: str, weighted: bool):
    fam = _require(cfg, "family", path)
    allowed = set(_FUNCTION_KEYS.get(fam, set()))
    if weighted:
        allowed = allowed | {"weight"}
    if fam not in _FUNCTION_KEYS:
        raise ConfigError(f"key '{path}family' must be one of {sorted(_FUNCTION_KEYS)}")
    _check_keys(cfg, allowed, path)
    if fam == "gaussian":
        return funcs.Gaussian(
            _number(cfg, "amplitude", path, positive=False, default=1.0),
            _number(cfg, "width", path, positive=True, default=1.0),
            d,
        )
    if fam == "bump":
        return funcs.Bump(
            _number(cfg, "radius", path, positive=True),
            _number(cfg, "amplitude", path, default=1.0),
            d,
        )
    if fam == "gaussian_density":
        return funcs.gaussian_density(_number(cfg, "variance", path, positive=True), d)
    raise ConfigError(f"key '{path}family': {fam} not allowed here")


def build_function(cfg: dict, d: int, path: str = "function.") -> funcs.TestFunction:
    fam = _require(cfg, "family", path)
    if fam == "zero":
        _check_keys(cfg, {"family"}, path)
        return funcs.zero_function(d)
    if fam == "mixture":
        _check_keys(cfg, _FUNCTION_KEYS["mixture"], path)
        comps_cfg = _require(cfg, "components", path)
        if not isinstance(comps_cfg, list):
            raise ConfigError(f"key '{path}components' must be a list")
        comps = []
        for i, c in enumerate(comps_cfg):
            cpath = f"{path}components[{i}]."
            w = _number(c, "weight", cpath, default=1.0)
            if w < 0:
                raise ConfigError(f"key '{cpath}weight' must be non-negative")
            comps.append((w, _build_single(c, d, cpath, weighted=True)))
        shift = _vector(cfg, "shift", path, d)
        return funcs.Mixture(tuple(comps), d, shift)
    base = _build_single(cfg, d, path, weighted=False)
    shift = _vector(cfg, "shift", path, d)
    return base.shifted(shift) if any(s != 0 for s in shift) else base


def build_kernel(cfg: dict, d: int, path: str = "process.jump_kernel."):
    fam = _require(cfg, "family", path)
    if fam == "gaussian":
        _check_keys(cfg, {"family", "variance", "shift"}, path)
        return GaussianJumps(
            _number(cfg, "variance", path, positive=True, default=1.0),
            d,
            _vector(cfg, "shift", path, d),
        )
    if fam == "exponential_tail":
        _check_keys(cfg, {"family", "decay", "shift"}, path)
        return ExponentialJumps(
            _number(cfg, "decay", path, positive=True, default=1.0),
            d,
            _vector(cfg, "shift", path, d),
        )
    raise ConfigError(f"key '{path}family' must be 'gaussian' or 'exponential_tail'")


def build_process(cfg: dict, path: str = "process.") -> ProcessSpec:
    fam = _require(cfg, "family", path)
    d = _integer(cfg, "d", path, minimum=1)
    start = _vector(cfg, "start", path, d)
    try:
        if fam == "bm":
            _check_keys(cfg, {"family", "d", "start"}, path)
            return BmSpec(d, start)
        if fam == "fbm":
            _check_keys(cfg, {"family", "d", "hurst", "start"}, path)
            return FbmSpec(d, _number(cfg, "hurst", path, positive=True), start)
        if fam == "cpp":
            _check_keys(cfg, {"family", "d", "rate", "jump_kernel", "start"}, path)
            kernel = build_kernel(_require(cfg, "jump_kernel", path), d)
            return CppSpec(d, _number(cfg, "rate", path, positive=True, default=1.0), kernel, start)
    except (ValueError, NotImplementedError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid '{path.rstrip('.')}': {exc}")
    raise ConfigError(f"key '{path}family' must be one of bm, fbm, cpp")


def build_grid(cfg: dict, path: str = "lattice.") -> GridSpec:
    _check_keys(cfg, {"extent", "points"}, path)
    try:
        return GridSpec(
            _number(cfg, "extent", path, positive=True),
            _integer(cfg, "points", path, minimum=4),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid '{path.rstrip('.')}': {exc}")


_TOP_KEYS = {
    "process",
    "function",
    "n",
    "dt",
    "horizon",
    "lattice",
    "seed",
    "threads",
    "green0",
    "fault_injection",
}

_REQUIRED = {
    "analytic": ("process", "function"),
    "simulate": ("process", "function", "n", "horizon"),
    "compare": ("process", "function", "n", "horizon"),
    "green0": ("process", "lattice"),
}


@dataclass
class Experiment:
    command: str
    raw: dict
    spec: ProcessSpec | None = None
    function: funcs.TestFunction | None = None
    n: int = 0
    dt: float | None = None
    horizon_mode: str = "fixed"
    horizon_T: float | None = None
    horizon_eps: float | None = None
    grid: GridSpec | None = None
    seed: int = 0
    threads: int = 1
    series_terms: int | None = None
    fit_lo: float = 2.0
    fit_hi: float = 6.0
    fault_mean_scale: float = 1.0
    fault_mean_offset: float = 0.0


def validate_config(raw: dict, command: str) -> Experiment:
    _check_keys(raw, _TOP_KEYS, "")
    for key in _REQUIRED[command]:
        _require(raw, key, "")
    exp = Experiment(command, raw)
    exp.spec = build_process(raw["process"])
    if "function" in raw:
        exp.function = build_function(raw["function"], exp.spec.d)
    exp.seed = _integer(raw, "seed", "", default=0, minimum=0)
    exp.threads = _integer(raw, "threads", "", default=1, minimum=1)
    if command in ("simulate", "compare"):
        exp.n = _integer(raw, "n", "", minimum=2)
        hz = raw["horizon"]
        _check_keys(hz, {"mode", "T", "eps_tail"}, "horizon.")
        mode = _require(hz, "mode", "horizon.")
        if mode not in ("fixed", "adaptive"):
            raise ConfigError("key 'horizon.mode' must be 'fixed' or 'adaptive'")
        exp.horizon_mode = mode
        if mode == "fixed":
            exp.horizon_T = _number(hz, "T", "horizon.", positive=True)
        else:
            exp.horizon_eps = _number(hz, "eps_tail", "horizon.", positive=True)
        if isinstance(exp.spec, (BmSpec, FbmSpec)):
            exp.dt = _number(raw, "dt", "", positive=True)
        elif "dt" in raw:
            exp.dt = _number(raw, "dt", "", positive=True)
    if "lattice" in raw:
        exp.grid = build_grid(raw["lattice"])
    elif command == "green0":
        raise ConfigError("missing required key 'lattice'")
    if command == "green0" and not isinstance(exp.spec, CppSpec):
        raise ConfigError("green0 needs a process of family 'cpp'")
    if "green0" in raw:
        g = raw["green0"]
        _check_keys(g, {"series_terms", "fit_lo", "fit_hi"}, "green0.")
        if "series_terms" in g:
            exp.series_terms = _integer(g, "series_terms", "green0.", minimum=1)
        exp.fit_lo = _number(g, "fit_lo", "green0.", default=2.0, positive=True)
        exp.fit_hi = _number(g, "fit_hi", "green0.", default=6.0, positive=True)
    if "fault_injection" in raw:
        fi = raw["fault_injection"]
        _check_keys(fi, {"analytic_mean_scale", "analytic_mean_offset"}, "fault_injection.")
        exp.fault_mean_scale = _number(fi, "analytic_mean_scale", "fault_injection.", default=1.0)
        exp.fault_mean_offset = _number(fi, "analytic_mean_offset", "fault_injection.", default=0.0)
    return exp


def resolved_config_dict(exp: Experiment) -> dict:
    """The config as actually used, for embedding into every output file."""
    out = dict(exp.raw)
    out["seed"] = exp.seed
    out["threads"] = exp.threads
    out["command"] = exp.command
    return out
