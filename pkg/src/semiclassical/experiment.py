"""Configuration-driven experiments: validation, reference caching, sweeps and slope fits."""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import os
import re
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .gaussian import BranchError, FrameError, GaussianParams, evaluate, make_params, variational_propagate
from .grid import ExactPropagator, GridState, l2_error, load_grid, make_grid, propagate_grid, save_grid
from .hagedorn import build_index_set, hagedorn_frame, hagedorn_propagate, hagedorn_state, synthesize
from .krylov import KrylovError
from .phasespace import PhaseSpaceObservable, coordinate_observable, egorov_expectation, weyl_polynomial_expectation
from .potentials import POTENTIAL_NAMES, PotentialModel, make_potential
from .quadrature import gauss_hermite_tensor
from .superposition import init_ensemble, propagate_ensemble, reconstruct

log = logging.getLogger(__name__)

WORKERS_ENV = "SEMICLASSICAL_WORKERS"
METHODS = ("gwp_split", "hagedorn", "thawed", "frozen", "egorov", "grid_strang", "grid_zassenhaus")
RESULT_COLUMNS = (
    "method", "epsilon", "tau", "level", "error_l2", "error_l2_phase_aligned", "error_obs_q", "error_obs_p",
    "error_obs_energy", "norm_drift", "runtime_s", "seed",
)
NUMERICAL_ERRORS = (BranchError, FrameError, KrylovError, FloatingPointError, np.linalg.LinAlgError)

_number_or_list = {
    "oneOf": [
        {"type": "number", "exclusiveMinimum": 0},
        {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
    ]
}
_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 3}
_complex_matrix = {
    "type": "object",
    "properties": {
        "re": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "im": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    },
    "required": ["re"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["potential", "epsilon", "dimension", "initial", "method", "time"],
    "additionalProperties": False,
    "properties": {
        "potential": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {"name": {"enum": list(POTENTIAL_NAMES)}, "params": {"type": "object"}},
        },
        "epsilon": _number_or_list,
        "dimension": {"type": "integer", "minimum": 1, "maximum": 3},
        "initial": {
            "type": "object",
            "required": ["kind", "q", "p"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["gaussian", "hagedorn"]},
                "q": _vector,
                "p": _vector,
                "Q": _complex_matrix,
                "P": _complex_matrix,
                "k0": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "method": {
            "oneOf": [
                {"enum": list(METHODS)},
                {
                    "type": "object",
                    "required": ["name"],
                    "additionalProperties": False,
                    "properties": {
                        "name": {"enum": list(METHODS)},
                        "order": {"enum": [2, 4]},
                        "index_set": {"enum": ["cube", "simplex", "hyperbolic"]},
                        "K": {"type": "integer", "minimum": 0},
                        "density": {"enum": ["wigner", "husimi_corrected"]},
                    },
                },
            ]
        },
        "time": {
            "type": "object",
            "required": ["t_final", "tau"],
            "additionalProperties": False,
            "properties": {"t_final": {"type": "number", "minimum": 0}, "tau": _number_or_list},
        },
        "grid": {
            "type": "object",
            "required": ["K", "domain"],
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 4},
                "domain": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            },
        },
        "quadrature": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["gh", "smolyak", "mc", "qmc"]},
                "level": {"type": "integer", "minimum": 0},
                "m": {"type": "integer", "minimum": 1, "maximum": 128},
                "N": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "format": {"enum": ["csv"]},
                "dump_states": {"type": "boolean"},
                "cache_dir": {"type": "string"},
            },
        },
    },
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def _pointer(parts: Iterable) -> str:
    return "/" + "/".join(str(p) for p in parts) if parts else "/"


def validate_config(config: dict) -> None:
    """Raise ConfigError with a JSON-pointer path for the first (deepest) schema violation."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        parts = list(err.absolute_path)
        if err.validator == "required":
            match = re.match(r"'(.+)' is a required property", err.message)
            if match:
                parts.append(match.group(1))
        elif err.validator == "additionalProperties":
            match = re.search(r"\('(.+?)'", err.message)
            if match:
                parts.append(match.group(1))
        raise ConfigError(_pointer(parts), err.message)
    d = config["dimension"]
    for key in ("q", "p"):
        if len(config["initial"][key]) != d:
            raise ConfigError(f"/initial/{key}", f"expected {d} entries")
    method = method_options(config)["name"]
    if method.startswith("grid") or method in ("gwp_split", "hagedorn", "thawed", "frozen"):
        if "grid" not in config and d <= 2:
            raise ConfigError("/grid", "a grid is required for reference comparison")
    if method.startswith("grid") and d > 2:
        raise ConfigError("/dimension", "grid methods support d <= 2")


def method_options(config: dict) -> dict:
    m = config["method"]
    opts = {"name": m} if isinstance(m, str) else dict(m)
    opts.setdefault("order", 2)
    opts.setdefault("index_set", "cube")
    opts.setdefault("K", 3)
    opts.setdefault("density", "wigner")
    return opts


def _as_list(v):
    return list(v) if isinstance(v, list) else [v]


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("/", f"invalid JSON: {exc}") from exc
    validate_config(config)
    return config


@dataclass
class ResultRow:
    method: str
    epsilon: float
    tau: float
    level: float
    error_l2: float
    error_l2_phase_aligned: float
    error_obs_q: float
    error_obs_p: float
    error_obs_energy: float
    norm_drift: float
    runtime_s: float
    seed: int

    def as_list(self) -> list:
        return [getattr(self, c) for c in RESULT_COLUMNS]


def _complex_matrix(spec, d):
    if spec is None:
        return None
    re_part = np.asarray(spec["re"], dtype=float)
    im_part = np.asarray(spec.get("im", np.zeros_like(re_part)), dtype=float)
    M = re_part + 1j * im_part
    if M.shape != (d, d):
        raise ConfigError("/initial", f"frame matrices must be {d}x{d}")
    return M


def _initial_params(config: dict, eps: float) -> GaussianParams:
    ini, d = config["initial"], config["dimension"]
    return make_params(ini["q"], ini["p"], _complex_matrix(ini.get("Q"), d), _complex_matrix(ini.get("P"), d), eps=eps)


def _make_grid(config: dict, eps: float) -> GridState:
    g, d = config["grid"], config["dimension"]
    return make_grid(g["K"], [tuple(g["domain"])] * d, eps)


def _initial_grid_state(config: dict, eps: float) -> GridState:
    template = _make_grid(config, eps)
    params = _initial_params(config, eps)
    ini = config["initial"]
    if ini["kind"] == "hagedorn":
        index_set, k0 = _hagedorn_set(config)
        frame = hagedorn_frame(params.q, params.p, params.Q, params.P, eps)
        return template.with_values(synthesize(hagedorn_state(frame, index_set, k0=k0), template.points()))
    return template.with_values(evaluate(params, template.points(), normalized=True))


def _hagedorn_set(config):
    opts = method_options(config)
    d = config["dimension"]
    k0 = tuple(config["initial"].get("k0", [0] * d))
    index_set = build_index_set(d, opts["index_set"], max(opts["K"], sum(k0)))
    if k0 not in index_set:
        raise ConfigError("/initial/k0", "k0 is not in the index set")
    return index_set, k0


def reference_key(config: dict, eps: float) -> str:
    payload = {
        "potential": config["potential"],
        "epsilon": eps,
        "dimension": config["dimension"],
        "initial": config["initial"],
        "grid": config.get("grid"),
        "t_final": config["time"]["t_final"],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:32]


def compute_reference(model: PotentialModel, psi0: GridState, t_final: float) -> GridState:
    """Exact discrete propagator for d = 1; Zassenhaus with a fine step for d = 2."""
    if psi0.dim == 1:
        return ExactPropagator(model, psi0)(psi0, t_final)
    n = max(1, int(math.ceil(t_final / 1e-3)))
    return propagate_grid(model, psi0, t_final / n, n, "zassenhaus")


def cached_reference(config: dict, model: PotentialModel, psi0: GridState, eps: float, cache_dir: Optional[Path]) -> GridState:
    if cache_dir is None:
        return compute_reference(model, psi0, config["time"]["t_final"])
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{reference_key(config, eps)}.grid"
    if path.exists():
        try:
            ref = load_grid(path)
            if ref.values.shape == psi0.values.shape and ref.domain == psi0.domain and np.all(np.isfinite(ref.values)):
                log.info("reference cache hit %s", path.name)
                return ref
            raise ValueError("shape mismatch")
        except Exception as exc:  # corrupted or truncated file
            warnings.warn(f"reference cache {path.name} unreadable ({exc}); recomputing", RuntimeWarning)
    ref = compute_reference(model, psi0, config["time"]["t_final"])
    save_grid(ref, path)
    return ref


def _grid_observables(model: PotentialModel, psi: GridState) -> tuple:
    d = psi.dim
    q = np.array([weyl_polynomial_expectation(psi, coordinate_observable(d, j)) for j in range(d)])
    p = np.array([weyl_polynomial_expectation(psi, coordinate_observable(d, d + j)) for j in range(d)])
    kinetic = sum(0.5 * weyl_polynomial_expectation(psi, coordinate_observable(d, d + j, 2)) for j in range(d))
    potential = float(np.sum(np.abs(psi.values.ravel()) ** 2 * model.value(psi.points())) * psi.cell_volume)
    return q, p, kinetic + potential


def _steps(t_final: float, tau: float, per_step: float = 1.0) -> int:
    n = t_final / (per_step * tau)
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError("/time/tau", f"t_final is not a multiple of {per_step:g} * tau")
    return int(round(n))


def _level_of(config: dict) -> float:
    quad = config.get("quadrature", {})
    for key in ("level", "m", "N"):
        if key in quad:
            return float(quad[key])
    return float("nan")


def run_point(config: dict, eps: float, tau: float, cache_dir: Optional[str] = None) -> tuple:
    """One (epsilon, tau) point; returns (ResultRow, final GridState or None)."""
    opts = method_options(config)
    method = opts["name"]
    d = config["dimension"]
    model = make_potential(config["potential"]["name"], d, config["potential"].get("params"))
    t_final = config["time"]["t_final"]
    quad_cfg = config.get("quadrature", {})
    seed = int(quad_cfg.get("seed", 0))
    has_grid = "grid" in config and d <= 2
    psi0 = _initial_grid_state(config, eps) if has_grid else None
    ref = cached_reference(config, model, psi0, eps, Path(cache_dir) if cache_dir else None) if has_grid else None
    nan = float("nan")
    err_q = err_p = err_e = nan
    final = None
    start = time.perf_counter()
    if method == "egorov":
        params = _initial_params(config, eps)
        if config["initial"]["kind"] == "hagedorn":
            index_set, k0 = _hagedorn_set(config)
            frame = hagedorn_frame(params.q, params.p, params.Q, params.P, eps)
            psi_init = hagedorn_state(frame, index_set, k0=k0)
        else:
            psi_init = params
        kind = quad_cfg.get("kind", "gh")
        kw = dict(sampler=kind, density=opts["density"], level=int(quad_cfg.get("level", quad_cfg.get("m", 16))),
                  N=int(quad_cfg.get("N", 10000)), seed=seed, order=opts["order"])
        obs = [coordinate_observable(d, j) for j in range(2 * d)]
        energy = PhaseSpaceObservable(lambda z: 0.5 * np.sum(z[:, d:] ** 2, axis=1) + model.value(z[:, :d]))
        vals = [egorov_expectation(model, psi_init, a, t_final, tau, **kw).value for a in obs + [energy]]
        runtime = time.perf_counter() - start
        if ref is not None:
            q_ref, p_ref, e_ref = _grid_observables(model, ref)
            err_q = float(np.linalg.norm(np.array(vals[:d]) - q_ref))
            err_p = float(np.linalg.norm(np.array(vals[d:2 * d]) - p_ref))
            err_e = abs(vals[-1] - e_ref)
        row = ResultRow(method, eps, tau, _level_of(config), nan, nan, err_q, err_p, err_e, nan, runtime, seed)
        return row, None
    template = psi0
    if method in ("grid_strang", "grid_zassenhaus"):
        final = propagate_grid(model, psi0, tau, _steps(t_final, tau), method.split("_")[1])
        values = final.values
    elif method == "gwp_split":
        params = _initial_params(config, eps)
        m = int(quad_cfg.get("m", quad_cfg.get("level", 8)))
        u = variational_propagate(model, params, tau, _steps(t_final, tau), quad=gauss_hermite_tensor(m, d))
        values = evaluate(u, template.points()) if template is not None else None
    elif method == "hagedorn":
        params = _initial_params(config, eps)
        index_set, k0 = _hagedorn_set(config)
        frame = hagedorn_frame(params.q, params.p, params.Q, params.P, eps)
        state = hagedorn_state(frame, index_set, k0=k0)
        state = hagedorn_propagate(model, state, tau, _steps(t_final, tau, 2.0), order_r=opts["order"])
        values = synthesize(state, template.points()) if template is not None else None
    else:  # thawed / frozen
        kind = quad_cfg.get("kind", "gh")
        source = _initial_params(config, eps) if config["initial"]["kind"] == "gaussian" else psi0
        ens = init_ensemble(source, method, kind, level=int(quad_cfg.get("level", quad_cfg.get("m", 16))),
                            N=int(quad_cfg.get("N", 1000)), seed=seed)
        ens = propagate_ensemble(model, ens, tau, _steps(t_final, tau), order=opts["order"])
        values = reconstruct(ens, template.points()) if template is not None else None
    runtime = time.perf_counter() - start
    err, err_aligned, drift = nan, nan, nan
    if values is not None:
        final = template.with_values(values)
        err = l2_error(final, ref)
        err_aligned = l2_error(final, ref, phase_aligned=True)
        drift = abs(final.norm() - psi0.norm())
        q, p, e = _grid_observables(model, final)
        q_ref, p_ref, e_ref = _grid_observables(model, ref)
        err_q = float(np.linalg.norm(q - q_ref))
        err_p = float(np.linalg.norm(p - p_ref))
        err_e = abs(e - e_ref)
    if not all(math.isnan(v) or math.isfinite(v) for v in (err, err_aligned, drift)):
        raise FloatingPointError("non-finite error measure")
    row = ResultRow(method, eps, tau, _level_of(config), err, err_aligned, err_q, err_p, err_e, drift, runtime, seed)
    return row, final


def sweep_points(config: dict) -> list:
    """(epsilon, tau) pairs in sweep-definition order (epsilon outer, tau inner)."""
    return list(itertools.product(_as_list(config["epsilon"]), _as_list(config["time"]["tau"])))


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_point_job(args):
    config, eps, tau, cache_dir = args
    return run_point(config, eps, tau, cache_dir)


def run(config: dict, cache_dir: Optional[str] = None, workers: Optional[int] = None) -> tuple:
    """Run every sweep point; returns (rows, final states) in sweep-definition order."""
    validate_config(config)
    if cache_dir is None:
        out = config.get("output", {})
        cache_dir = out.get("cache_dir")
    points = sweep_points(config)
    if cache_dir:
        # fill the cache once per epsilon before fanning out
        for eps in dict.fromkeys(e for e, _ in points):
            if "grid" in config and config["dimension"] <= 2:
                d = config["dimension"]
                model = make_potential(config["potential"]["name"], d, config["potential"].get("params"))
                cached_reference(config, model, _initial_grid_state(config, eps), eps, Path(cache_dir))
    jobs = [(config, eps, tau, cache_dir) for eps, tau in points]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point_job, jobs))
    else:
        results = [_run_point_job(j) for j in jobs]
    return [r for r, _ in results], [s for _, s in results]


def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(rows: Sequence[ResultRow], path, config: dict) -> None:
    """CSV in ResultRow column order plus a JSON sidecar echoing the configuration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_format(v) for v in row.as_list()])
    sidecar = {"config": config, "version": __version__, "columns": list(RESULT_COLUMNS), "rows": len(rows)}
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def read_results(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def fit_slope(rows, x_field: str, y_field: str) -> tuple:
    """Least-squares slope of log(y) against log(x); returns (slope, r^2)."""
    rows = list(rows)
    if len(rows) < 3:
        raise ValueError("at least three rows are needed")
    get = lambda r, f: float(r[f] if isinstance(r, dict) else getattr(r, f))
    x = np.array([get(r, x_field) for r in rows])
    y = np.array([get(r, y_field) for r in rows])
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise ValueError("slope fit needs positive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / total if total > 0 else 1.0
    return float(slope), float(r2)
