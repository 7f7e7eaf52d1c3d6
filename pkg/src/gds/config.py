"""JSON experiment configuration.

Schema (all keys at the top level)::

    {
      "densities": {"f": {family, params, support}, "g": {..., "constant": c}},
      "perturbation": {"tau": {kind, params}, "a1": ..., "b1": ..., "r1": .., "r2": ..},
      "n": 2,
      "N_grid": [4096, 8192, ...],
      "replications": 200000,
      "bins": {"count": 8},
      "eval_cells": [[3, 4], [4, 3], [2, 5]],
      "seeds": {"master_seed": 20240611},
      "tolerances": {"slope": 0.15, "r_squared": 0.8, "z": 4.0},
      "threads": 1,
      "strict_paper_conventions": true,
      "quadrature": {"scheme": "gauss-legendre-composite", "panels": 256, "abs_tol": 1e-10}
    }

Every error is a :class:`ConfigError` naming the offending field.
"""
from __future__ import annotations

import copy
import json

from .densities import DensitySpec
from .errors import ConfigError
from .estimator import PerturbationSpec
from .experiment import DEFAULT_TOLERANCES, ExperimentConfig
from .quadrature import QuadratureRule

TOP_LEVEL = (
    "densities",
    "perturbation",
    "n",
    "N_grid",
    "replications",
    "bins",
    "eval_cells",
    "seeds",
    "tolerances",
    "threads",
    "strict_paper_conventions",
    "quadrature",
    "z",
)


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _leaf_paths(record, prefix=""):
    for key, value in record.items():
        path = f"{prefix}{key}"
        yield path
        if isinstance(value, dict):
            yield from _leaf_paths(value, path + ".")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(record, overrides):
    """Apply ``KEY=VALUE`` overrides; returns ``(new_record, applied)``.

    ``KEY`` is a dotted path (``perturbation.r1``).  A key whose first part is
    not a top-level field resolves to the unique existing path ending in it,
    so ``r1=0.5`` sets ``perturbation.r1`` and ``tau.params.value=0.1`` sets
    ``perturbation.tau.params.value``.  Values are parsed as JSON, falling back to a
    plain string.
    """
    record = copy.deepcopy(record)
    applied = []
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE", "override")
        key, text = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"override {item!r} has an empty key", "override")
        head = key.split(".", 1)[0]
        if head not in record and head not in TOP_LEVEL:
            matches = [p for p in _leaf_paths(record) if p == key or p.endswith("." + key)]
            if len(matches) == 1:
                key = matches[0]
            elif len(matches) > 1:
                raise ConfigError(f"ambiguous override key {key!r}: {matches}", "override")
            else:
                raise ConfigError(f"override key {key!r} does not match any config field", "override")
        parts = key.split(".")
        node = record
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigError(f"cannot descend into non-object field {part!r}", key)
            node = child
        node[parts[-1]] = _parse_value(text)
        applied.append(f"{key}={text}")
    return record, applied


def require(record, key, where=""):
    if not isinstance(record, dict) or key not in record:
        raise ConfigError("missing required field", f"{where}{key}")
    return record[key]


def parse_densities(record):
    dens = require(record, "densities")
    if not isinstance(dens, dict):
        raise ConfigError("expected an object with f and g", "densities")
    f = DensitySpec.from_dict(require(dens, "f", "densities."), "densities.f")
    g = DensitySpec.from_dict(require(dens, "g", "densities."), "densities.g")
    if not f.contains_support(g):
        raise ConfigError("target support must lie inside the data support", "densities.g.support")
    return f, g


def parse_perturbation(record):
    return PerturbationSpec.from_dict(require(record, "perturbation"), "perturbation")


def parse_quadrature(record):
    q = record.get("quadrature", {})
    if not isinstance(q, dict):
        raise ConfigError("expected an object", "quadrature")
    unknown = set(q) - set(QuadratureRule.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown fields {sorted(unknown)}", "quadrature")
    try:
        return QuadratureRule(**q)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "quadrature") from exc


def _int(record, key, default=None):
    if key not in record:
        if default is None:
            raise ConfigError("missing required field", key)
        return default
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", key)
    return int(value)


def parse_bins(record, g):
    bins = record.get("bins", {"count": 8})
    if isinstance(bins, (int, float)) and not isinstance(bins, bool):
        return (int(bins),)
    if isinstance(bins, list):
        return tuple(int(b) for b in bins)
    if isinstance(bins, dict):
        count = bins.get("count", 8)
        return tuple(int(c) for c in (count if isinstance(count, list) else [count]))
    raise ConfigError("expected a count, a list of counts, or {count}", "bins")


def parse_experiment(record):
    """Build an :class:`ExperimentConfig` from a parsed JSON record."""
    if not isinstance(record, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(record) - set(TOP_LEVEL) - {"metadata"}
    if unknown:
        raise ConfigError(f"unknown top-level fields {sorted(unknown)}")
    f, g = parse_densities(record)
    spec = parse_perturbation(record)
    try:
        spec.bounds(f.support)
    except ValueError as exc:
        raise ConfigError(str(exc), "perturbation") from exc
    n = _int(record, "n", 2)
    grid = require(record, "N_grid")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("expected a non-empty list of integers", "N_grid")
    seeds = record.get("seeds", {})
    if not isinstance(seeds, dict):
        raise ConfigError("expected an object", "seeds")
    tol = record.get("tolerances", {})
    if not isinstance(tol, dict) or set(tol) - set(DEFAULT_TOLERANCES):
        raise ConfigError(f"tolerances must be an object with keys from {sorted(DEFAULT_TOLERANCES)}", "tolerances")
    fields = {
        "f": f,
        "g": g,
        "spec": spec,
        "n": n,
        "N_grid": tuple(grid),
        "replications": _int(record, "replications", 200_000),
        "bins": parse_bins(record, g),
        "eval_cells": tuple(tuple(c) for c in record.get("eval_cells", ())),
        "master_seed": _int(seeds, "master_seed", 0) if "master_seed" in seeds else 0,
        "tolerances": tol,
        "threads": _int(record, "threads", 1),
        "strict_paper_conventions": bool(record.get("strict_paper_conventions", True)),
        "quad": parse_quadrature(record),
    }
    try:
        return ExperimentConfig(**fields)
    except (TypeError, ValueError) as exc:
        field = _guess_field(str(exc))
        raise ConfigError(str(exc), field) from exc


def _guess_field(message):
    for key in ("N_grid", "replications", "bins", "eval cell", "threads", "master seed", "n must"):
        if key in message:
            return {"eval cell": "eval_cells", "master seed": "seeds.master_seed", "n must": "n"}.get(key, key)
    return None


def load_experiment(path, overrides=(), seed=None, threads=None):
    """Read, override and validate a config file.

    Returns ``(ExperimentConfig, record, applied_overrides)``.
    """
    record = load_json(path)
    if not isinstance(record, dict):
        raise ConfigError("config must be a JSON object")
    record, applied = apply_overrides(record, overrides)
    if seed is not None:
        record.setdefault("seeds", {})["master_seed"] = int(seed)
    if threads is not None:
        record["threads"] = int(threads)
    return parse_experiment(record), record, applied


def experiment_to_dict(cfg):
    """Inverse of :func:`parse_experiment` (normalized)."""
    return {
        "densities": {"f": cfg.f.to_dict(), "g": cfg.g.to_dict()},
        "perturbation": cfg.spec.to_dict(),
        "n": cfg.n,
        "N_grid": list(cfg.N_grid),
        "replications": cfg.replications,
        "bins": {"count": list(cfg.bins)},
        "eval_cells": [list(c) for c in cfg.eval_cells],
        "seeds": {"master_seed": cfg.master_seed},
        "tolerances": dict(cfg.tolerances),
        "threads": cfg.threads,
        "strict_paper_conventions": cfg.strict_paper_conventions,
        "quadrature": {
            "scheme": cfg.quad.scheme,
            "panels": cfg.quad.panels,
            "abs_tol": cfg.quad.abs_tol,
            "nodes": cfg.quad.nodes,
            "cap": cfg.quad.cap,
            "max_doublings": cfg.quad.max_doublings,
            "graded": cfg.quad.graded,
        },
    }
