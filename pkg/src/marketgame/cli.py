"""Batch experiment runner: ``marketgame run config.json``.

Exit codes: 0 success, 2 invalid config, 3 too much censoring, 4 numerical
failure.  Outputs (``results.json`` and one CSV per series) are computed in
full before anything is written, then moved into place with ``os.replace``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from typing import Optional

import jsonschema
import numpy as np

from .analysis.bounds import TheoremBounds, theorem2_rhs
from .analysis.diagnostics import DEFAULT_C_GRID, drift_test, harvest_states, survival_report
from .analysis.separation import compute_f
from .engine import GameConfig, simulate_path
from .errors import CensoringExceeded, ConfigInvalid, MarketGameError, NumericalFailure
from .payoffs import GrowthSpec, PathRng, RelativePayoffSpec
from .stopping import (
    DEFAULT_CENSOR_BOUND,
    example1_crossings,
    game_horizon,
    geometric_levels,
    ratio_curve,
    simulate_crossings,
    estimates_from_taus,
)

EXPERIMENTS = ("simulate", "crossing", "ratio_curve", "f_of_a", "diagnostics", "example1")

_number = {"type": "number"}
_vector = {"type": "array", "items": _number, "minItems": 1}

_growth = {
    "type": "object",
    "required": ["kind"],
    "oneOf": [
        {"properties": {"kind": {"const": "constant"}, "value": {"type": "number", "exclusiveMinimum": 0}},
         "required": ["value"]},
        {"properties": {"kind": {"const": "discrete"}, "values": _vector, "probs": _vector},
         "required": ["values", "probs"]},
        {"properties": {"kind": {"const": "lognormal"}, "mu": _number,
                        "sigma": {"type": "number", "minimum": 0}},
         "required": ["mu", "sigma"]},
    ],
}

_relative = {
    "type": "object",
    "required": ["kind"],
    "oneOf": [
        {"properties": {"kind": {"const": "dirichlet"}, "alpha": _vector}, "required": ["alpha"]},
        {"properties": {"kind": {"const": "discrete"},
                        "points": {"type": "array", "items": _vector, "minItems": 1},
                        "probs": _vector},
         "required": ["points", "probs"]},
        {"properties": {"kind": {"const": "constant"}, "weights": _vector}, "required": ["weights"]},
    ],
}

_strategy = {
    "type": "object",
    "required": ["kind"],
    "oneOf": [
        {"properties": {"kind": {"const": "lambda_star"}}},
        {"properties": {"kind": {"const": "constant"}, "weights": _vector}, "required": ["weights"]},
        {"properties": {"kind": {"const": "separated"}, "base": _vector,
                        "a": {"type": "number", "exclusiveMinimum": 0},
                        "floor": {"type": "number", "exclusiveMinimum": 0}},
         "required": ["base", "a", "floor"]},
    ],
}

_payoffs = {
    "type": "object",
    "properties": {"rho": _growth, "relative": _relative},
    "required": ["relative"],
}

_game = {
    "type": "object",
    "properties": {
        "initial_wealths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                            "minItems": 2},
        "strategies": {"type": "array", "items": _strategy, "minItems": 2},
        "payoffs": {"type": "object", "properties": {"rho": _growth, "relative": _relative},
                    "required": ["rho", "relative"]},
    },
    "required": ["initial_wealths", "strategies", "payoffs"],
}

_levels = {
    "oneOf": [
        {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        {"type": "object",
         "properties": {"start": {"type": "number", "exclusiveMinimum": 0},
                        "factor": {"type": "number", "exclusiveMinimum": 1},
                        "count": {"type": "integer", "minimum": 1}},
         "required": ["start", "factor", "count"]},
    ]
}

_horizon = {"oneOf": [{"const": "auto"}, {"type": "integer", "minimum": 1}]}

SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "game": _game,
        "payoffs": _payoffs,
        "levels": _levels,
        "paths": {"type": "integer", "minimum": 1},
        "horizon": _horizon,
        "censor_bound": {"type": "number", "minimum": 0, "maximum": 1},
        "a": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                        {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                         "minItems": 1}]},
        "opponent": {"type": "integer", "minimum": 1},
        "c_grid": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "states": {"type": "integer", "minimum": 1},
        "inner_samples": {"type": "integer", "minimum": 2},
        "relative": _vector,
        "rho": {"type": "number", "exclusiveMinimum": 1},
        "opponent_weights": _vector,
        "initial_wealths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                            "minItems": 2, "maxItems": 2},
        "output": {"type": "object",
                   "properties": {"dir": {"type": "string"}, "prefix": {"type": "string"}}},
    },
    "required": ["experiment", "seed"],
    "allOf": [
        {"if": {"properties": {"experiment": {"enum": ["simulate", "crossing", "ratio_curve",
                                                       "diagnostics"]}}},
         "then": {"required": ["game"]}},
        {"if": {"properties": {"experiment": {"enum": ["crossing", "ratio_curve"]}}},
         "then": {"required": ["levels", "paths"]}},
        {"if": {"properties": {"experiment": {"enum": ["simulate", "diagnostics"]}}},
         "then": {"required": ["horizon"], "properties": {"horizon": {"type": "integer"}}}},
        {"if": {"properties": {"experiment": {"const": "f_of_a"}}},
         "then": {"required": ["payoffs", "a"]}},
        {"if": {"properties": {"experiment": {"const": "example1"}}},
         "then": {"required": ["relative", "rho", "opponent_weights", "levels"]}},
    ],
}


# --------------------------------------------------------------------------
# Output helpers


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".12g")


def _jsonable(obj):
    """Round floats to 12 significant digits; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(format(x, ".12g"))
    return obj


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


PLOT_COLUMNS = {
    "ratio_curve": ["level", "ratio", "ci_lo", "ci_hi", "theorem2_rhs"],
    "diagnostics": ["t", "drift", "se", "compensator"],
    "crossing": ["level", "investor", "mean_tau", "se", "censored", "paths", "lower_bound", "upper_bound"],
    "f_of_a": ["a", "f_a", "theorem2_rhs"],
    "example1": ["l", "tau1", "tau2", "ratio"],
}


def emit_plot_data(kind: str, result) -> dict[str, str]:
    """CSV text for each figure of a finished experiment, keyed by file name.

    ``result`` may be ``None`` or empty, in which case only the header is
    written.
    """
    if kind not in PLOT_COLUMNS:
        return {}
    header = PLOT_COLUMNS[kind]
    rows: list = []
    if result:
        if kind == "ratio_curve":
            rhs = result.get("theorem2_rhs")
            rows = [(lv, r, lo, hi, rhs) for lv, r, lo, hi in
                    zip(result["levels"], result["ratio"], result["ci_lo"], result["ci_hi"])]
        elif kind == "diagnostics":
            t = range(1, len(result["drift"]) + 1)
            rows = list(zip(t, result["drift"], result["se"], result["compensator"][1:]))
        elif kind == "crossing":
            rows = [tuple(e[c] for c in header) for e in result["estimates"]]
        elif kind == "f_of_a":
            rows = [(e["a"], e["f_a"], e.get("theorem2_rhs")) for e in result["values"]]
        elif kind == "example1":
            rows = list(zip(result["levels"], result["tau1"], result["tau2"], result["ratio"]))
    return {f"{kind}.csv": _csv_text(header, rows)}


def write_outputs(out_dir: str, files: dict[str, str]) -> list[str]:
    """Write every file to a temp name in ``out_dir`` first, then rename all."""
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, os.path.join(out_dir, name)))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


# --------------------------------------------------------------------------
# Experiments


def _levels(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return geometric_levels(spec["start"], spec["factor"], spec["count"])
    return np.asarray(spec, dtype=float)


def _run_simulate(cfg, game: GameConfig, seed, workers):
    paths = cfg.get("paths", 1)
    files, finals = {}, []
    for i in range(paths):
        p = simulate_path(game, cfg["horizon"], PathRng(seed, i))
        buf = io.StringIO()
        p.write_csv(buf)
        files[f"path_{i:04d}.csv"] = buf.getvalue()
        last = p.states[-1]
        finals.append({"path": i, "log_total_wealth": last.log_total_wealth,
                       "shares": last.shares})
    return {"paths": paths, "horizon": cfg["horizon"], "final": finals}, files


def _run_crossing(cfg, game: GameConfig, seed, workers):
    levels = _levels(cfg["levels"])
    investors = list(range(game.n_investors))
    horizon = cfg.get("horizon", "auto")
    if horizon == "auto":
        horizon = game_horizon(game, float(levels.max()))
    bound = cfg.get("censor_bound", DEFAULT_CENSOR_BOUND)
    taus = simulate_crossings(game, levels, cfg["paths"], horizon, seed, investors, workers)
    ests = estimates_from_taus(game, taus, levels, investors, horizon, bound)
    rows = [{"level": e.level, "investor": e.investor + 1, "mean_tau": e.mean, "se": e.se,
             "paths": e.paths, "censored": e.censored, "lower_bound": e.lower_bound,
             "upper_bound": e.upper_bound} for e in ests]
    result = {"horizon": int(horizon), "estimates": rows}
    bad = [e for e in ests if not e.valid]
    if bad:
        e = bad[0]
        raise CensoringExceeded(f"investor {e.investor + 1}, level {e.level:g}: "
                                f"{e.censored}/{e.total_paths} paths censored", e)
    return result, {}


def _run_ratio_curve(cfg, game: GameConfig, seed, workers):
    curve = ratio_curve(game, _levels(cfg["levels"]), cfg["paths"], seed,
                        opponent=cfg.get("opponent", 2) - 1, horizon=cfg.get("horizon", "auto"),
                        censor_bound=cfg.get("censor_bound", DEFAULT_CENSOR_BOUND),
                        workers=workers)
    result = {
        "levels": curve.levels, "mean_tau_1": curve.mean_tau_1, "mean_tau_2": curve.mean_tau_2,
        "ratio": curve.ratio, "se": curve.se, "ci_lo": curve.ci_lo, "ci_hi": curve.ci_hi,
        "paths_used": curve.paths_used, "censored": curve.censored, "horizon": curve.horizon,
        "f_a": curve.f_a, "a": curve.separation, "theorem2_rhs": curve.theorem2_rhs,
    }
    return result, {}


def _run_f_of_a(cfg, seed):
    rel = RelativePayoffSpec.from_dict(cfg["payoffs"]["relative"])
    growth = GrowthSpec.from_dict(cfg["payoffs"]["rho"]) if "rho" in cfg["payoffs"] else None
    radii = cfg["a"] if isinstance(cfg["a"], list) else [cfg["a"]]
    values = []
    for a in radii:
        fa = compute_f(rel, float(a), seed=seed)
        entry = fa.to_dict()
        if growth is not None and fa.feasible:
            entry["theorem2_rhs"] = theorem2_rhs(fa, growth.theta)
        values.append(entry)
    result = dict(values[0]) if len(values) == 1 else {}
    result["values"] = values
    if growth is not None and "levels" in cfg:
        lam_star = rel.mean
        y0 = cfg.get("initial_wealths", [1.0, 1.0])
        b = TheoremBounds(growth.theta, growth.sigma, rel.epsilon, rel.epsilon ** 2 / 256.0,
                          float(sum(y0)), float(y0[0]))
        levels = _levels(cfg["levels"])
        result["bounds"] = {"levels": levels,
                            "lower_tau": [b.lower_tau(x) for x in levels],
                            "upper_tau": [b.upper_tau(x) for x in levels]}
        result["lambda_star"] = lam_star.tolist()
    return result, {}


def _run_diagnostics(cfg, game: GameConfig, seed, workers):
    rep = survival_report(game, cfg.get("paths", 100), cfg["horizon"], seed,
                          cfg.get("c_grid", list(DEFAULT_C_GRID)))
    result = {
        "horizon": rep.horizon,
        "drift": rep.drift, "se": rep.se, "compensator": rep.compensator,
        "survived": rep.survived,
        "min_r": float(rep.min_r.min()),
        "compensator_nondecreasing": rep.compensator_nondecreasing(),
        "compensator_bound_ok": bool(rep.compensator_bound_ok().all()),
        "c_grid": rep.c_grid, "eta_mean": rep.eta_mean(),
    }
    if "states" in cfg:
        states = harvest_states(game, cfg["states"], min(cfg["horizon"], 50), seed)
        dr = drift_test(game, states, cfg.get("inner_samples", 10_000), seed)
        result["drift_test"] = {
            "states": len(states),
            "submartingale_ok": bool(dr.submartingale_ok.all()),
            "supermartingale_ok": bool(dr.supermartingale_ok.all()),
            "min_drift": float(dr.drift.min()),
        }
    return result, {}


def _run_example1(cfg, seed):
    levels = _levels(cfg["levels"])
    y0 = cfg.get("initial_wealths", [0.5, 0.5])
    tau = example1_crossings(cfg["relative"], cfg["rho"], cfg["opponent_weights"], levels, y0)
    ratio = tau[:, 0] / tau[:, 1]
    return {"levels": levels, "tau1": tau[:, 0], "tau2": tau[:, 1], "ratio": ratio}, {}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from exc
    return cfg


def run_experiment(cfg: dict, workers: Optional[int] = None) -> tuple[dict, dict[str, str]]:
    """Run a validated config; returns (results, extra files)."""
    kind, seed = cfg["experiment"], cfg["seed"]
    if kind == "f_of_a":
        result, files = _run_f_of_a(cfg, seed)
    elif kind == "example1":
        result, files = _run_example1(cfg, seed)
    else:
        try:
            game = GameConfig.from_dict(cfg["game"])
        except (KeyError, TypeError) as exc:
            raise ConfigInvalid(f"bad game section: {exc}") from exc
        runner = {"simulate": _run_simulate, "crossing": _run_crossing,
                  "ratio_curve": _run_ratio_curve, "diagnostics": _run_diagnostics}[kind]
        result, files = runner(cfg, game, seed, workers)
    files = dict(files)
    files.update(emit_plot_data(kind, _jsonable(result)))
    return result, files


def run(config_path: str, out_dir: Optional[str] = None, workers: Optional[int] = None,
        seed: Optional[int] = None) -> int:
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg["seed"] = seed
        out = out_dir or cfg.get("output", {}).get("dir") or "."
        result, files = run_experiment(cfg, workers)
        summary = {"experiment": cfg["experiment"], "seed": cfg["seed"], "config": cfg,
                   "results": result}
        files["results.json"] = json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n"
        written = write_outputs(out, files)
    except CensoringExceeded as exc:
        return _fail(3, "CensoringExceeded", exc)
    except NumericalFailure as exc:
        return _fail(4, "NumericalFailure", exc)
    except (ConfigInvalid, MarketGameError, ValueError) as exc:
        return _fail(2, "ConfigInvalid", exc)
    print(json.dumps({"status": "ok", "experiment": cfg["experiment"],
                      "files": sorted(os.path.basename(p) for p in written)}))
    return 0


def _fail(code: int, name: str, exc: Exception) -> int:
    print(json.dumps({"status": "error", "error": name, "detail": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="marketgame")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment described by a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = parser.parse_args(argv)
    return run(args.config, args.out, args.workers, args.seed)


if __name__ == "__main__":
    sys.exit(main())
