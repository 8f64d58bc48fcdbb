"""Run configuration: one JSON file drives sampling, training, and macro runs.

The schema is strict. Every field has a default, so an empty object is a
valid config, but unknown keys anywhere in the tree are rejected rather
than silently ignored (a typo in "n_per_zeta" must not quietly run the
default plan). The resolved configuration is hashed canonically and the
hash is stamped into every output file so results can be traced back to
the exact inputs that produced them.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

__all__ = ["ConfigError", "SCHEMA_VERSION", "DEFAULTS", "resolve_config",
           "load_config", "config_hash", "canonical_json"]

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "seed": 7,
    "threads": 1,
    "material": {"c1": 0.55, "c2": 0.3, "k": 55.0},
    "geometry": {
        "mesh": "rve_coarse.json",
        "zeta_parent": 0.025,
        "zetas": [-0.05, -0.025, 0.0, 0.025, 0.05],
    },
    "sampling": {
        "n_per_zeta": 20,
        "n_steps": 20,
        "store": "snapshots",
        "bounds": {
            "stretch_lo": -0.10,
            "stretch_hi": 0.02,
            "shear": 0.10,
            "gradient": 0.05,
        },
    },
    "pod": {
        "tol_w": 1e-5,
        "tol_y": 5e-3,
        "tol_yh": 5e-3,
        # explicit mode counts override the matching tolerance when set
        "n_w": None,
        "n_y": None,
        "n_yh": None,
    },
    "cubature": {
        "eps": [1e-4, 1e-4, 1e-4, 1e-4],
        "c": [10.0, 1.6, 1.1],
        "k_max": None,
    },
    "train": {
        "artifact": "rom.h2r",
        "residual_csv": "residuals.csv",
    },
    "macro": {
        "mode": "full",
        "width": 6.0,
        "height": 20.0,
        "nx": 2,
        "ny": 4,
        "zeta": -0.035,
        "compression": 0.075,
        "n_steps": 40,
        "max_cuts": 8,
        "perturb": 0.0,
        "curve_csv": "curve.csv",
        "fields": "fields.json",
    },
}


class ConfigError(ValueError):
    """Raised for malformed, mistyped, or unknown configuration content."""


def _merge(defaults, given, prefix):
    """Defaults overlaid with user values; unknown keys are an error."""
    extra = sorted(set(given) - set(defaults))
    if extra:
        where = prefix or "top level"
        raise ConfigError(f"unknown config key(s) at {where}: {', '.join(extra)}")
    out = {}
    for key, dval in defaults.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if key not in given:
            out[key] = copy.deepcopy(dval)
        elif isinstance(dval, dict):
            if not isinstance(given[key], dict):
                raise ConfigError(f"{dotted} must be an object")
            out[key] = _merge(dval, given[key], dotted)
        else:
            out[key] = given[key]
    return out


def _fail(name, want, got):
    raise ConfigError(f"{name} must be {want}, got {got!r}")


def _get(cfg, name):
    v = cfg
    for part in name.split("."):
        v = v[part]
    return v


def _check_num(v, name, lo=None, hi=None, positive=False):
    # bool is an int subclass; true/false are never valid numbers here
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(name, "a number", v)
    v = float(v)
    if not math.isfinite(v):
        _fail(name, "finite", v)
    if positive and v <= 0.0:
        _fail(name, "positive", v)
    if lo is not None and v < lo:
        _fail(name, f">= {lo}", v)
    if hi is not None and v > hi:
        _fail(name, f"<= {hi}", v)
    return v


def _num(cfg, name, lo=None, hi=None, positive=False):
    return _check_num(_get(cfg, name), name, lo=lo, hi=hi, positive=positive)


def _int(cfg, name, lo=None, optional=False):
    v = _get(cfg, name)
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(name, "an integer", v)
    if lo is not None and v < lo:
        _fail(name, f">= {lo}", v)
    return v


def _str(cfg, name, allow_none=False):
    v = _get(cfg, name)
    if v is None and allow_none:
        return None
    if not isinstance(v, str) or not v:
        _fail(name, "a non-empty string", v)
    return v


def _validate(cfg):
    if cfg["schema"] != SCHEMA_VERSION:
        raise ConfigError(
            f"schema must be {SCHEMA_VERSION}, got {cfg['schema']!r}")
    _int(cfg, "seed", lo=0)
    _int(cfg, "threads", lo=1)

    _num(cfg, "material.c1", positive=True)
    _num(cfg, "material.c2", lo=0.0)
    _num(cfg, "material.k", positive=True)

    _str(cfg, "geometry.mesh")
    _num(cfg, "geometry.zeta_parent")
    zetas = cfg["geometry"]["zetas"]
    if not isinstance(zetas, list) or not zetas:
        _fail("geometry.zetas", "a non-empty list of numbers", zetas)
    cfg["geometry"]["zetas"] = [
        _check_num(z, f"geometry.zetas[{i}]") for i, z in enumerate(zetas)]

    _int(cfg, "sampling.n_per_zeta", lo=0)
    _int(cfg, "sampling.n_steps", lo=1)
    _str(cfg, "sampling.store")
    lo = _num(cfg, "sampling.bounds.stretch_lo", lo=-0.9)
    hi = _num(cfg, "sampling.bounds.stretch_hi")
    if hi < lo:
        raise ConfigError("sampling.bounds.stretch_hi below stretch_lo")
    _num(cfg, "sampling.bounds.shear", lo=0.0)
    _num(cfg, "sampling.bounds.gradient", lo=0.0)

    for name in ("pod.tol_w", "pod.tol_y", "pod.tol_yh"):
        _num(cfg, name, positive=True, hi=1.0)
    for name in ("pod.n_w", "pod.n_y", "pod.n_yh"):
        _int(cfg, name, lo=1, optional=True)

    eps = cfg["cubature"]["eps"]
    if not isinstance(eps, list) or len(eps) != 4:
        _fail("cubature.eps", "a list of 4 positive numbers", eps)
    cfg["cubature"]["eps"] = [
        _num({"e": e}, "e", positive=True) for e in eps]
    cc = cfg["cubature"]["c"]
    if not isinstance(cc, list) or len(cc) != 3:
        _fail("cubature.c", "a list of 3 positive numbers", cc)
    cfg["cubature"]["c"] = [
        _num({"c": c}, "c", positive=True) for c in cc]
    _int(cfg, "cubature.k_max", lo=1, optional=True)

    _str(cfg, "train.artifact")
    _str(cfg, "train.residual_csv", allow_none=True)

    if cfg["macro"]["mode"] not in ("full", "rom"):
        _fail("macro.mode", "'full' or 'rom'", cfg["macro"]["mode"])
    _num(cfg, "macro.width", positive=True)
    _num(cfg, "macro.height", positive=True)
    _int(cfg, "macro.nx", lo=1)
    _int(cfg, "macro.ny", lo=1)
    _num(cfg, "macro.zeta")
    _num(cfg, "macro.compression", positive=True)
    _int(cfg, "macro.n_steps", lo=1)
    _int(cfg, "macro.max_cuts", lo=0)
    _num(cfg, "macro.perturb", lo=0.0)
    _str(cfg, "macro.curve_csv")
    _str(cfg, "macro.fields", allow_none=True)
    return cfg


def resolve_config(raw):
    """Overlay user values on the defaults, validate, and return the result."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return _validate(_merge(DEFAULTS, raw, ""))


def load_config(path):
    """Read and resolve a JSON config file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    return resolve_config(raw)


def canonical_json(obj):
    """Key-sorted compact JSON; the hashing and stamping representation."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    """sha256 of the canonical resolved config, first 16 hex digits."""
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()[:16]
