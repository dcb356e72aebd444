"""``chaos-budget`` command-line front end.

Every subcommand reads an optional TOML config (``--config``), applies flag
and ``--set key=value`` overrides, runs, and writes its outputs plus a
``<out>.manifest.json`` holding the fully resolved config. Passing that
manifest back as ``--config`` reproduces the outputs exactly.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
from dataclasses import replace
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .diagnostics import compute_c_lt, compute_spectrum, estimate_lte
from .ensemble import (
    J_REF_LORENZ,
    EnsembleConfig,
    ReferenceAccuracyError,
    _set_threads,
    compute_reference,
    expected_abs_error_sweep,
    monte_carlo_error,
    read_sweep_csv,
    transient_traces,
    write_sweep_csv,
)
from .error_model import FIT_WINDOWS, NonDimScales, UnidentifiableError, derive_scales, fit_error_model, load_params, save_params
from .integrators import SCHEMES, DivergenceError, TrajectoryConfig, get_scheme, run_trajectory
from .planner import (
    DEFAULT_TRANSIENT_BOUNDS,
    BudgetSpec,
    InfeasibleError,
    TransientParams,
    load_transient,
    optimize_total,
    plan_to_dict,
    save_transient,
    scan_total_error,
)
from .systems import ICDistribution, linear_decay_system, lorenz_system
from .transient import TraceObservation, ensemble_transient_bounds, fit_map, sample_hmc

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGENCE = 4
EXIT_UNIDENTIFIABLE = 5
EXIT_REFERENCE = 6

PLAN_SCAN_COLUMNS = ("dt", "t0", "e_model", "feasible")
LTE_CSV_COLUMNS = ("dt", "max_lte")
SPECTRUM_CSV_COLUMNS = ("f", "amp_u0", "amp_u1", "amp_u2")
TRACE_CSV_COLUMNS = ("t", "g")


class ConfigError(ValueError):
    pass


# Defaults double as the type schema: a key's default fixes the accepted type.
# ``None`` means "optional, any of the listed types".
_COMMON = {
    "system": "lorenz",
    "alpha": [10.0, 28.0, 8.0 / 3.0],
    "rate": 1.0,
    "dimension": 1,
    "scheme": "rk4",
    "base_seed": 0,
    "ic_mean": 1.0,
    "ic_std": 5.0,
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "reference": {"dt": 5e-3, "t0": 100.0, "Ts": 2000.0, "M": 400, "out": "reference.json"},
    "sweep": {
        "dt": [0.05, 0.02, 0.01], "Ts": [10.0, 100.0], "t0": 100.0, "M": 100,
        "J_ref": None, "reference": None, "out": "sweep.csv",
    },
    "fit": {"sweep": None, "window": None, "order": None, "reference": None, "out": "fit.json"},
    "transient-fit": {
        "trace": None, "method": "map", "n_starts": 8, "discard_before": 5.0, "n_samples": 10000,
        "M": 200, "dt": 1e-2, "T": 100.0, "n_draws": 2000, "n_warmup": 500, "n_leapfrog": 10,
        "out": "trans.json",
    },
    "plan": {
        "params": None, "transient": None, "U": 1200000, "m_ens": 1, "mode": "fitted",
        "reference": None, "n_grid": 161, "scan_points": 41, "out": "plan.json", "scan_out": None,
    },
    "lte": {"dt": None, "Ts": 100.0, "t0": 100.0, "substeps": 10, "out": "lte.csv"},
    "spectrum": {"dt": 1e-3, "t0": 100.0, "Ts": 1000.0, "f_min": 1.0, "f_max": None, "out": "spectrum.csv"},
    "validate": {
        "plan": None, "repetitions": 200, "J_ref": None, "reference": None, "out": "validate.json",
    },
}

_OPTIONAL_TYPES = {
    "J_ref": (float, int), "reference": (str,), "sweep": (str, list), "window": (list,), "order": (int,),
    "trace": (str,), "params": (str,), "transient": (str,), "scan_out": (str,), "dt": (list, float, int),
    "f_max": (float, int), "plan": (str,),
}

# Command-specific overrides of common defaults.
_COMMAND_COMMON = {"transient-fit": {"ic_std": 100.0}}


def _check_type(key, value, default):
    if default is None:
        allowed = _OPTIONAL_TYPES.get(key, (object,))
        if value is None or isinstance(value, allowed):
            return value
        raise ConfigError(f"config key '{key}' has type {type(value).__name__}; expected {'/'.join(t.__name__ for t in allowed)}")
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, list):
        # scalar floats are also accepted where a per-component list is expected
        ok = isinstance(value, list) or (key in ("ic_mean", "ic_std") and isinstance(value, (int, float)))
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"config key '{key}' has type {type(value).__name__}; expected {type(default).__name__}")
    return value


def resolve_config(command: str, file_cfg: Optional[dict], overrides: dict) -> dict:
    """Merge defaults, the config file (top level, then its ``[command]`` table) and overrides."""
    schema = {**_COMMON, **_COMMAND_COMMON.get(command, {}), **DEFAULTS[command]}
    merged: dict[str, Any] = dict(schema)
    layers = []
    if file_cfg:
        top = {k: v for k, v in file_cfg.items() if not isinstance(v, dict)}
        layers.append(top)
        if isinstance(file_cfg.get(command), dict):
            layers.append(file_cfg[command])
    layers.append(overrides)
    for layer in layers:
        for k, v in layer.items():
            if k not in schema:
                raise ConfigError(f"unknown config key '{k}' for command '{command}'")
            merged[k] = _check_type(k, v, schema[k])
    if merged["scheme"] not in SCHEMES:
        raise ConfigError(f"config key 'scheme' must be one of {sorted(SCHEMES)}, got {merged['scheme']!r}")
    if merged["system"] not in ("lorenz", "linear"):
        raise ConfigError(f"config key 'system' must be 'lorenz' or 'linear', got {merged['system']!r}")
    return merged


def _load_file_config(path: str) -> dict:
    try:
        if path.endswith(".json"):
            with open(path) as fh:
                doc = json.load(fh)
            # a manifest: rerun from its resolved config
            return doc["config"] if "config" in doc and "command" in doc else doc
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = tomllib.loads(f"x = {v}")["x"]
        except tomllib.TOMLDecodeError:
            out[k.strip()] = v
    return out


# --- builders ---------------------------------------------------------------


def build_system(cfg):
    if cfg["system"] == "lorenz":
        return lorenz_system(tuple(cfg["alpha"]))
    return linear_decay_system(cfg["rate"], cfg["dimension"])


def build_ic(cfg, system):
    dim = system.dimension
    mean = np.broadcast_to(np.asarray(cfg["ic_mean"], dtype=float), (dim,)).copy()
    std = np.broadcast_to(np.asarray(cfg["ic_std"], dtype=float), (dim,)).copy()
    return ICDistribution(mean, std)


def _ensemble_cfg(cfg, dt, t0, Ts, M, base_seed=None):
    system = build_system(cfg)
    return EnsembleConfig(
        system, get_scheme(cfg["scheme"]), TrajectoryConfig(float(dt), float(t0), float(Ts)), int(M),
        build_ic(cfg, system), int(cfg["base_seed"] if base_seed is None else base_seed),
    )


def _default_J_ref(cfg):
    if cfg.get("J_ref") is not None:
        return float(cfg["J_ref"])
    if cfg.get("reference"):
        with open(cfg["reference"]) as fh:
            return float(json.load(fh)["J_ref"])
    if cfg["system"] == "lorenz" and list(cfg["alpha"]) == _COMMON["alpha"]:
        return J_REF_LORENZ
    if cfg["system"] == "linear":
        return 0.0
    raise ConfigError("config key 'J_ref' (or 'reference') is required for this system")


def _require(cfg, key):
    if cfg.get(key) in (None, ""):
        raise ConfigError(f"config key '{key}' is required")
    return cfg[key]


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path, required):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if rows:
        missing = [c for c in required if c not in rows[0]]
        if missing:
            raise ConfigError(f"{path} lacks columns: {', '.join(missing)}")
    return rows


def _f(x):
    return repr(float(x))


# --- commands ---------------------------------------------------------------


def cmd_reference(cfg) -> list[str]:
    ens = _ensemble_cfg(cfg, cfg["dt"], cfg["t0"], cfg["Ts"], cfg["M"])
    if ens.M < 2:
        raise ConfigError("config key 'M' must be >= 2: a single instance has no confidence interval")
    ref = compute_reference(ens)
    _write_json(cfg["out"], {
        "schema_version": SCHEMA_VERSION, "J_ref": ref.J_ref, "ci95": ref.ci95, "var_of_J": ref.var_of_J,
        "sigma_g_hat": ref.sigma_g_hat, "M": ref.M, "Ts": ref.Ts, "dt": ens.traj.dt, "t0": ens.traj.t0,
        "scheme": ens.scheme.id,
    })
    return [cfg["out"]]


def cmd_sweep(cfg) -> list[str]:
    dts = cfg["dt"] if isinstance(cfg["dt"], list) else [cfg["dt"]]
    Tss = cfg["Ts"] if isinstance(cfg["Ts"], list) else [cfg["Ts"]]
    grid = list(itertools.product(map(float, dts), map(float, Tss)))
    ens = _ensemble_cfg(cfg, grid[0][0], cfg["t0"], grid[0][1], cfg["M"])
    ci95 = None
    if cfg.get("reference"):
        with open(cfg["reference"]) as fh:
            ci95 = float(json.load(fh)["ci95"])
    samples = expected_abs_error_sweep(ens, grid, _default_J_ref(cfg), ci95)
    write_sweep_csv(samples, cfg["out"])
    return [cfg["out"]]


def cmd_fit(cfg) -> list[str]:
    paths = _require(cfg, "sweep")
    paths = paths if isinstance(paths, list) else [paths]
    parts = [read_sweep_csv(p) for p in paths]
    samples = parts[0]
    if len(parts) > 1:
        cat = lambda name: np.concatenate([getattr(s, name) for s in parts])
        samples = replace(samples, dt=cat("dt"), Ts=cat("Ts"), E_abs_err=cat("E_abs_err"), stderr=cat("stderr"),
                          M=cat("M"), excluded_fraction=cat("excluded_fraction"), seeds=None)
    scheme = samples.scheme or cfg["scheme"]
    window = tuple(cfg["window"]) if cfg["window"] else FIT_WINDOWS.get(scheme)
    order = cfg["order"] if cfg["order"] is not None else get_scheme(scheme).order
    params = fit_error_model(samples, window=window, order=order)
    params = replace(params, scheme=scheme, provenance={**params.provenance, "sweeps": paths})
    if cfg.get("reference"):
        with open(cfg["reference"]) as fh:
            ref = json.load(fh)
        s = derive_scales(ref["var_of_J"], ref["Ts"], ref["sigma_g_hat"])
        params.provenance.update({"sigma_g": s.sigma_g, "T_d": s.T_d})
    save_params(params, cfg["out"])
    return [cfg["out"]]


def _write_trace_transient(cfg, res, method):
    save_transient(res.map_estimate, cfg["out"], log_post=res.log_post_map, method=method)
    with open(cfg["out"]) as fh:
        doc = json.load(fh)
    doc["transient_detected"] = bool(res.transient_detected)
    if res.samples is not None:
        doc["acceptance_rate"] = res.acceptance_rate
        doc["posterior_mean"] = dict(zip(("A_lambda", "T_lambda", "J_inf", "sigma_g"), map(float, res.samples.mean(0))))
    _write_json(cfg["out"], doc)


def cmd_transient_fit(cfg) -> list[str]:
    if cfg["method"] not in ("map", "hmc"):
        raise ConfigError("config key 'method' must be 'map' or 'hmc'")
    seed = int(cfg["base_seed"])
    if cfg["trace"]:
        rows = _read_csv(cfg["trace"], TRACE_CSV_COLUMNS)
        t = np.array([float(r["t"]) for r in rows])
        g = np.array([float(r["g"]) for r in rows])
        obs = TraceObservation.from_trace(t, g, cfg["discard_before"], cfg["n_samples"])
        res = fit_map(obs, n_starts=cfg["n_starts"], seed=seed)
        if cfg["method"] == "hmc":
            res = sample_hmc(obs, n_draws=cfg["n_draws"], n_warmup=cfg["n_warmup"], n_leapfrog=cfg["n_leapfrog"],
                             seed=seed, map_result=res)
        _write_trace_transient(cfg, res, cfg["method"])
        return [cfg["out"]]
    # No trace given: simulate an ensemble of transients and bound them.
    ens = _ensemble_cfg(cfg, cfg["dt"], 0.0, cfg["T"], cfg["M"])
    obs = [TraceObservation.from_trace(tr[:, 0], tr[:, 1], cfg["discard_before"], cfg["n_samples"])
           for tr in transient_traces(ens)]
    b = ensemble_transient_bounds(obs, n_starts=cfg["n_starts"], seed=seed)
    save_transient(TransientParams(b.A_lambda_bound, b.T_lambda_bound), cfg["out"], method="ensemble-map")
    with open(cfg["out"]) as fh:
        doc = json.load(fh)
    doc.update({"n_used": b.n_used, "n_excluded": b.n_excluded})
    _write_json(cfg["out"], doc)
    return [cfg["out"]]


def _scales_from(cfg, params):
    if cfg.get("reference"):
        with open(cfg["reference"]) as fh:
            ref = json.load(fh)
        return derive_scales(ref["var_of_J"], ref["Ts"], ref["sigma_g_hat"])
    prov = params.provenance
    if "sigma_g" in prov and "T_d" in prov:
        return NonDimScales(float(prov["sigma_g"]), float(prov["T_d"]))
    return None


def cmd_plan(cfg) -> list[str]:
    params = load_params(_require(cfg, "params"))
    if cfg["transient"]:
        trans = load_transient(cfg["transient"])
    else:
        trans = DEFAULT_TRANSIENT_BOUNDS
    scheme = params.scheme or cfg["scheme"]
    if cfg["mode"] not in ("fitted", "clt"):
        raise ConfigError("config key 'mode' must be 'fitted' or 'clt'")
    scales = _scales_from(cfg, params)
    if cfg["mode"] == "clt" and scales is None:
        raise ConfigError("config key 'reference' is required for mode = 'clt'")
    try:
        budget = BudgetSpec(int(cfg["U"]), int(cfg["m_ens"]), scheme)
    except ValueError as exc:
        raise InfeasibleError(str(exc)) from exc
    plan = optimize_total(params, trans, budget, cfg["mode"], scales, n_grid=cfg["n_grid"])
    doc = plan_to_dict(plan)
    doc["transient"] = {"A_lambda": trans.A_lambda, "T_lambda": trans.T_lambda}
    doc["system"] = cfg["system"]
    _write_json(cfg["out"], doc)
    n = cfg["scan_points"]
    dt_grid = np.geomspace(plan.dt_opt / 10, plan.dt_opt * 10, n)
    t0_hi = max(3 * plan.t0_opt, 10 * trans.T_lambda, 1e-12)
    t0_grid = np.linspace(0.0, t0_hi, n)
    scan = scan_total_error(params, trans, budget, dt_grid, t0_grid, cfg["mode"], scales)
    rows = []
    for i, d in enumerate(scan.dt_grid):
        for j, t0 in enumerate(scan.t0_grid):
            rows.append([_f(d), _f(t0), _f(scan.e[i, j]), int(scan.feasible[i, j])])
    scan_out = cfg["scan_out"] or os.path.splitext(cfg["out"])[0] + "_scan.csv"
    _write_csv(scan_out, PLAN_SCAN_COLUMNS, rows)
    return [cfg["out"], scan_out]


def cmd_lte(cfg) -> list[str]:
    scheme = get_scheme(cfg["scheme"])
    system = build_system(cfg)
    dts = cfg["dt"]
    if dts is None:
        hi = {"fe": 1e-3, "rk3": 1e-2, "rk4": 1e-2}[scheme.id]
        dts = list(np.geomspace(hi / 10, hi, 5))
    elif not isinstance(dts, list):
        dts = [dts]
    ic = build_ic(cfg, system).sample(np.random.default_rng(np.random.SeedSequence(cfg["base_seed"])))
    lte = estimate_lte(scheme, system, [float(d) for d in dts], cfg["Ts"], cfg["t0"], ic, cfg["substeps"])
    _write_csv(cfg["out"], LTE_CSV_COLUMNS, [[_f(d), _f(e)] for d, e in zip(lte.dt_values, lte.max_lte_norms)])
    summary = {"schema_version": SCHEMA_VERSION, "scheme": scheme.id, "rate": lte.rate, "c_p": lte.c_p}
    if system.max_derivative_order >= scheme.order + 1:
        summary["C_LT"] = compute_c_lt(lte, system, ic=ic, t0=cfg["t0"], Ts=cfg["Ts"])
    js = os.path.splitext(cfg["out"])[0] + ".json"
    _write_json(js, summary)
    return [cfg["out"], js]


def cmd_spectrum(cfg) -> list[str]:
    system = build_system(cfg)
    if system.dimension != 3:
        raise ConfigError("spectrum output expects a three-component system")
    ic = build_ic(cfg, system).sample(np.random.default_rng(np.random.SeedSequence(cfg["base_seed"])))
    tr = run_trajectory(get_scheme(cfg["scheme"]), system, TrajectoryConfig(cfg["dt"], cfg["t0"], cfg["Ts"]), ic,
                        record=True)
    spec = compute_spectrum(tr.sampled_states, cfg["dt"], (cfg["f_min"], cfg["f_max"]))
    rows = [[_f(f)] + [_f(a) for a in amp] for f, amp in zip(spec.freqs, spec.amplitudes)]
    _write_csv(cfg["out"], SPECTRUM_CSV_COLUMNS, rows)
    js = os.path.splitext(cfg["out"])[0] + ".json"
    _write_json(js, {
        "schema_version": SCHEMA_VERSION, "a": spec.a, "b": spec.b, "a_components": list(map(float, spec.a_components)),
        "b_components": list(map(float, spec.b_components)), "f_window": list(map(float, spec.window)),
    })
    return [cfg["out"], js]


def cmd_validate(cfg) -> list[str]:
    with open(_require(cfg, "plan")) as fh:
        plan = json.load(fh)
    missing = [k for k in ("dt_opt", "n_spinup", "n_sampling", "M_ens", "e_model_opt", "scheme") if k not in plan]
    if missing:
        raise ConfigError(f"plan file lacks keys: {', '.join(missing)}")
    dt = float(plan["dt_opt"])
    cfg = {**cfg, "scheme": plan["scheme"]}
    ens = _ensemble_cfg(cfg, dt, plan["n_spinup"] * dt, plan["n_sampling"] * dt, 1)
    M_ens, R = int(plan["M_ens"]), int(cfg["repetitions"])
    E, se, _ = monte_carlo_error(ens, M_ens, R, _default_J_ref(cfg))
    e_model = float(plan["e_model_opt"])
    _write_json(cfg["out"], {
        "schema_version": SCHEMA_VERSION, "E_measured": E, "stderr": se, "e_model": e_model, "ratio": E / e_model,
        "repetitions": R, "M_ens": M_ens, "dt": dt, "n_spinup": plan["n_spinup"], "n_sampling": plan["n_sampling"],
    })
    return [cfg["out"]]


COMMANDS = {
    "reference": cmd_reference,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "transient-fit": cmd_transient_fit,
    "plan": cmd_plan,
    "lte": cmd_lte,
    "spectrum": cmd_spectrum,
    "validate": cmd_validate,
}

# Named flags mapped to config keys (dash form on the command line).
_FLAGS = {
    "reference": ["dt", "t0", "Ts", "M"],
    "sweep": ["t0", "M", "J_ref", "reference"],
    "fit": ["reference", "order"],
    "transient-fit": ["trace", "method", "M"],
    "plan": ["params", "transient", "U", "m_ens", "mode", "reference", "scan_out"],
    "lte": ["Ts", "t0"],
    "spectrum": ["dt", "t0", "Ts"],
    "validate": ["plan", "repetitions", "J_ref", "reference"],
}
_FLAG_TYPES = {
    "dt": float, "t0": float, "Ts": float, "M": int, "J_ref": float, "U": int, "m_ens": int, "order": int,
    "repetitions": int,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chaos-budget", description="Cost-optimal statistics of chaotic ODE simulations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML config, or a manifest JSON to rerun")
        sp.add_argument("--out", help="primary output path")
        sp.add_argument("--scheme", choices=sorted(SCHEMES))
        sp.add_argument("--seed", dest="base_seed", type=int)
        sp.add_argument("--threads", type=int, help="worker threads (default: all cores)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        for key in _FLAGS[name]:
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=_FLAG_TYPES.get(key, str))
        if name == "fit":
            sp.add_argument("--sweep", dest="sweep", action="append")
    return p


def _manifest(command, cfg, outputs, argv, threads):
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg,
        "seeds": {"base_seed": cfg["base_seed"]},
        "outputs": outputs,
        "package_version": __version__,
        "argv": list(argv),
        "threads": threads,
    }


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        file_cfg = _load_file_config(args.config) if args.config else None
        overrides = _parse_set(args.set)
        for key in ["out", "scheme", "base_seed", *_FLAGS[command], *(["sweep"] if command == "fit" else [])]:
            v = getattr(args, key, None)
            if v is not None:
                overrides[key] = v
        cfg = resolve_config(command, file_cfg, overrides)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            _set_threads(args.threads)
        outputs = COMMANDS[command](cfg)
        _write_json(outputs[0] + ".manifest.json", _manifest(command, cfg, outputs, argv, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except UnidentifiableError as exc:
        print(f"unidentifiable fit ({exc.missing_regime} regime): {exc}", file=sys.stderr)
        return EXIT_UNIDENTIFIABLE
    except ReferenceAccuracyError as exc:
        print(f"reference too coarse: {exc}", file=sys.stderr)
        return EXIT_REFERENCE
    except (FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print("\n".join(outputs))
    return EXIT_OK


def main():  # pragma: no cover
    sys.exit(run())
