"""Batch command-line interface: analyze a dataset, run simulations, dump
difference curves.

All randomness flows from a single --seed; identical (config, data, seed)
produce byte-identical outputs. Exit codes: 0 success, 2 configuration or
validation problem, 3 estimation failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .condcdf import GridSpec
from .crossfit import (
    EstimationError,
    crossfit_adjusters,
    estimate_crossfit,
    one_sided_cis,
    sjls_report,
    variant_fold_t,
    variant_group_propensity,
    variant_known_propensity,
)
from .data import (
    ConfigError,
    CsvParseError,
    DegenerateDesignError,
    PropensityModel,
    load_csv,
    make_folds,
    shift_for_delta,
    squash_outcomes,
)
from .splitfit import estimate_split, make_split
from .simulate import DgpSpec, McCell, run_table
from .stepfun import build_curve, dump_curve, inf_delta, sup_delta
from .stoye import EstimationFailure, H_RULES

METHODS = ("cross-fit", "sample-split", "sjls", "cross-fit-group",
           "cross-fit-ipw", "cross-fit-foldt")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ESTIMATION = 3
EXIT_IO = 4


def read_config_file(path: str) -> dict:
    """Flat key = value file; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtebounds",
        description="Bounds and confidence intervals for the distribution "
                    "of treatment effects")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output", default=None,
                       help="output path prefix (writes <prefix>.json etc.)")

    def add_analyze_args(p):
        add_common(p)
        p.add_argument("--input", default=None, help="CSV data file")
        p.add_argument("--y-col", default=None)
        p.add_argument("--d-col", default=None)
        p.add_argument("--x-prefix", default=None)
        p.add_argument("--x-cols", default=None,
                       help="comma-separated covariate columns")
        p.add_argument("--method", default=None, choices=None)
        p.add_argument("--models", default=None,
                       help="comma-separated model specs")
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--k-folds", type=int, default=None)
        p.add_argument("--aux-fraction", type=float, default=None)
        p.add_argument("--h-rule", default=None)
        p.add_argument("--propensity-mode", default=None)
        p.add_argument("--propensity-pi", type=float, default=None)
        p.add_argument("--propensity-col", default=None,
                       help="column with known per-unit propensities")
        p.add_argument("--group-col", default=None,
                       help="column with group labels for the group method")
        p.add_argument("--squash", action="store_true", default=None,
                       help="map outcomes through the bounded transform")
        p.add_argument("--grid", default=None,
                       help="argmax grid spec, e.g. normal:10000 or linear:2001")
        p.add_argument("--adjuster-file", default=None,
                       help="CSV with per-unit s_l,s_u columns from an "
                            "external learner; bypasses model fitting")

    p_an = sub.add_parser("analyze", help="estimate bounds on one dataset")
    add_analyze_args(p_an)
    p_cv = sub.add_parser("bounds-curve",
                          help="dump the adjusted CDF-difference curve")
    add_analyze_args(p_cv)
    p_sim = sub.add_parser("simulate", help="Monte Carlo power/size table")
    add_common(p_sim)
    p_sim.add_argument("--cells", default=None,
                       help="cell file: lines 'n,p,model,estimator'")
    p_sim.add_argument("--reps", type=int, default=None)
    p_sim.add_argument("--ar-coef", type=float, default=None)
    p_sim.add_argument("--k-folds", type=int, default=None)
    p_sim.add_argument("--theta0-reps", type=int, default=None)
    return parser


DEFAULTS = {
    "alpha": 0.05, "delta": 0.0, "k_folds": 5, "aux_fraction": 0.5,
    "seed": 0, "method": "cross-fit", "models": "constant",
    "h_rule": "stoye", "propensity.mode": "in_sample", "grid": "normal:10000",
    "y_col": "y", "d_col": "d", "reps": 1000, "ar_coef": 0.2,
    "theta0_reps": 2000000, "squash": False,
}

_CONFIG_KEYS = {
    "alpha": float, "delta": float, "k_folds": int, "aux_fraction": float,
    "seed": int, "method": str, "models": str, "h_rule": str,
    "propensity.mode": str, "propensity.pi": float, "propensity.col": str,
    "group.col": str, "grid": str, "y_col": str, "d_col": str,
    "x_prefix": str, "x_cols": str, "input": str, "output": str,
    "reps": int, "ar_coef": float, "cells": str, "theta0_reps": int,
    "squash": lambda v: v.lower() in ("1", "true", "yes"),
}

_FLAG_TO_KEY = {
    "y_col": "y_col", "d_col": "d_col", "x_prefix": "x_prefix",
    "x_cols": "x_cols", "method": "method", "models": "models",
    "delta": "delta", "k_folds": "k_folds", "aux_fraction": "aux_fraction",
    "h_rule": "h_rule", "propensity_mode": "propensity.mode",
    "propensity_pi": "propensity.pi", "propensity_col": "propensity.col",
    "group_col": "group.col", "alpha": "alpha", "seed": "seed",
    "input": "input", "output": "output", "grid": "grid", "cells": "cells",
    "reps": "reps", "ar_coef": "ar_coef", "theta0_reps": "theta0_reps",
    "squash": "squash", "adjuster_file": "adjuster_file",
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        raw = read_config_file(args.config)
        for key, val in raw.items():
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _CONFIG_KEYS[key](val)
    for flag, key in _FLAG_TO_KEY.items():
        val = getattr(args, flag, None)
        if val is not None:
            cfg[key] = val
    _validate_config(cfg, args.command)
    return cfg


def _validate_config(cfg: dict, command: str):
    if not 0.0 < cfg["alpha"] < 1.0:
        raise ConfigError("alpha: must lie in (0, 1)")
    if not np.isfinite(cfg["delta"]):
        raise ConfigError("delta: must be finite")
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method: {cfg['method']!r} is not one of "
                          f"{', '.join(METHODS)}")
    if cfg["h_rule"] not in H_RULES:
        raise ConfigError(f"h_rule: {cfg['h_rule']!r} is not one of "
                          f"{', '.join(H_RULES)}")
    kind, _, size = cfg["grid"].partition(":")
    if kind not in ("normal", "linear"):
        raise ConfigError("grid: kind must be 'normal' or 'linear'")
    if size and not size.isdigit():
        raise ConfigError("grid: size must be an integer")
    if command in ("analyze", "bounds-curve") and not cfg.get("input"):
        raise ConfigError("input: a data file is required")
    if command == "simulate" and not cfg.get("cells"):
        raise ConfigError("cells: a cell file is required")


def _grid_spec(cfg: dict) -> GridSpec:
    kind, _, size = cfg["grid"].partition(":")
    return GridSpec(kind=kind, size=int(size) if size else 10_000)


def _model_list(cfg: dict) -> list[str]:
    return [m.strip() for m in str(cfg["models"]).split(",") if m.strip()]


def _read_column(path: str, col: str) -> np.ndarray:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if col not in header:
            raise ConfigError(f"column {col!r} not found in {path}")
        j = header.index(col)
        return np.array([row[j].strip() for row in reader])


def _load_sample(cfg: dict):
    x_cols = None
    if cfg.get("x_cols"):
        x_cols = [c.strip() for c in str(cfg["x_cols"]).split(",")]
    sample = load_csv(cfg["input"], cfg["y_col"], cfg["d_col"],
                      x_cols=x_cols, x_prefix=cfg.get("x_prefix"))
    if cfg["squash"]:
        sample = squash_outcomes(sample)
    if cfg["delta"] != 0.0:
        sample = shift_for_delta(sample, cfg["delta"])
    return sample


def _external_adjusters(cfg: dict, n: int):
    """Per-unit adjustment values fitted outside this package."""
    if not cfg.get("adjuster_file"):
        return None
    from .data import Adjuster

    s_l = _read_column(cfg["adjuster_file"], "s_l").astype(float)
    s_u = _read_column(cfg["adjuster_file"], "s_u").astype(float)
    if s_l.size != n:
        raise ConfigError(
            f"adjuster_file: expected {n} rows, got {s_l.size}")
    return (Adjuster(values=s_l, label="user"),
            Adjuster(values=s_u, label="user"))


def _propensity(cfg: dict, sample) -> PropensityModel:
    mode = cfg["propensity.mode"]
    if mode == "constant_known":
        return PropensityModel(mode=mode, pi=cfg.get("propensity.pi"))
    if mode == "known_function":
        if not cfg.get("propensity.col"):
            raise ConfigError("propensity.col: required for known_function")
        vals = _read_column(cfg["input"], cfg["propensity.col"]).astype(float)
        return PropensityModel(mode=mode, p_of_x=vals)
    if mode == "group":
        if not cfg.get("group.col"):
            raise ConfigError("group.col: required for group mode")
        raw = _read_column(cfg["input"], cfg["group.col"])
        _, codes = np.unique(raw, return_inverse=True)
        return PropensityModel(mode=mode, group_of=codes)
    return PropensityModel(mode="in_sample")


def _run_analysis(cfg: dict):
    sample = _load_sample(cfg)
    method = cfg["method"]
    alpha = cfg["alpha"]
    seed = cfg["seed"]
    grid_spec = _grid_spec(cfg)
    models = _model_list(cfg)
    rules = [cfg["h_rule"]] + [r for r in H_RULES if r != cfg["h_rule"]]
    external = _external_adjusters(cfg, sample.n)
    if method == "sample-split":
        plan = make_split(sample, cfg["aux_fraction"], seed)
        return sample, estimate_split(sample, plan, models, alpha=alpha,
                                      seed=seed, grid_spec=grid_spec,
                                      adjusters=external)
    folds = make_folds(sample, cfg["k_folds"], seed)
    if method == "cross-fit":
        est = estimate_crossfit(sample, folds, models, seed=seed,
                                grid_spec=grid_spec, adjusters=external)
        return sample, one_sided_cis(est, alpha, sample.n, method=method,
                                     h_rules=rules)
    if method == "sjls":
        prop = _propensity(cfg, sample)
        if external is None:
            s_lo, s_hi, _ = crossfit_adjusters(sample, folds, models, seed,
                                               grid_spec)
        else:
            s_lo, s_hi = external
        return sample, sjls_report(sample, s_lo, s_hi, prop, alpha)
    if method == "cross-fit-ipw":
        prop = _propensity(cfg, sample)
        est = variant_known_propensity(sample, folds, models, prop,
                                       seed=seed, grid_spec=grid_spec,
                                       adjusters=external)
        return sample, one_sided_cis(est, alpha, sample.n, method=method,
                                     h_rules=rules)
    if method == "cross-fit-group":
        prop = _propensity(cfg, sample)
        folds = make_folds(sample, cfg["k_folds"], seed,
                           group_of=prop.group_of)
        est = variant_group_propensity(sample, folds, models, prop,
                                       seed=seed, grid_spec=grid_spec,
                                       adjusters=external)
        return sample, one_sided_cis(est, alpha, sample.n, method=method,
                                     h_rules=rules)
    if method == "cross-fit-foldt":
        est = variant_fold_t(sample, folds, models, seed=seed,
                             grid_spec=grid_spec, adjusters=external)
        return sample, one_sided_cis(est, alpha, sample.n, method=method,
                                     h_rules=rules)
    raise ConfigError(f"method: unhandled {method!r}")


def _render_text(rep, cfg: dict) -> str:
    est = rep.estimate
    lines = [
        f"method            {rep.method}",
        f"alpha             {rep.alpha}",
        f"delta             {cfg['delta']}",
        f"n (analysis)      {est.n}",
        f"lower bound       {est.theta_l:.6f}",
        f"upper bound       {est.theta_u:.6f}",
        f"optimizer t_l     {est.t_l:.6g}",
        f"optimizer t_u     {est.t_u:.6g}",
        f"one-sided lower   [{rep.lower_onesided:.6f}, 1]",
        f"one-sided upper   [0, {rep.upper_onesided:.6f}]",
        f"two-sided         [{rep.two_sided[0]:.6f}, {rep.two_sided[1]:.6f}]"
        + ("  (EMPTY: endpoints crossed)" if rep.crossed else ""),
        f"p (lower = 0)     {rep.p_lower_zero:.6g}",
        f"p (upper = 1)     {rep.p_upper_one:.6g}",
    ]
    if np.isfinite(est.sigma2_l):
        lines.append(f"sigma triple      {est.sigma2_l:.6g} {est.sigma2_u:.6g} "
                     f"{est.sigma_lu:.6g}")
    for rule, (lo, hi) in rep.two_sided_by_rule.items():
        lines.append(f"two-sided[{rule:<8s}] [{lo:.6f}, {hi:.6f}]")
    for d in rep.diagnostics:
        lines.append(f"note: {d}")
    if cfg["squash"]:
        lines.append("note: bounds refer to the transformed outcome scale")
    return "\n".join(lines) + "\n"


def cmd_analyze(cfg: dict) -> int:
    sample, rep = _run_analysis(cfg)
    payload = {"config": _echo(cfg), "report": rep.to_dict()}
    _write_output(cfg, payload, _render_text(rep, cfg))
    return EXIT_OK


def cmd_bounds_curve(cfg: dict) -> int:
    sample = _load_sample(cfg)
    models = _model_list(cfg)
    seed = cfg["seed"]
    grid_spec = _grid_spec(cfg)
    folds = make_folds(sample, cfg["k_folds"], seed)
    s_lo, s_hi, _ = crossfit_adjusters(sample, folds, models, seed, grid_spec)
    curve = build_curve(sample, s_lo)
    t_l, sup = sup_delta(curve)
    curve_u = build_curve(sample, s_hi)
    t_u, inf = inf_delta(curve_u)
    rows = dump_curve(curve)
    header = (f"# adjusted CDF-difference curve (lower side)\n"
              f"# theta_l={float(sup)!r} at t_l={float(t_l)!r}\n"
              f"# theta_u={float(1 + inf)!r} at t_u={float(t_u)!r}\n"
              f"# columns: t delta\n")
    body = "".join(f"{float(t)!r} {float(dv)!r}\n" for t, dv in rows)
    out = cfg.get("output")
    if out:
        with open(f"{out}.curve.txt", "w", encoding="utf-8") as fh:
            fh.write(header + body)
    else:
        sys.stdout.write(header + body)
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    cells = []
    with open(cfg["cells"], encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.lower().startswith("n,"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ConfigError(
                    f"{cfg['cells']}:{lineno}: expected n,p,model,estimator")
            cells.append(McCell(int(parts[0]), int(parts[1]), parts[2],
                                parts[3]))
    spec = DgpSpec(ar_coef=cfg["ar_coef"])
    report = run_table(spec, cells, replications=cfg["reps"],
                       alpha=cfg["alpha"], seed=cfg["seed"],
                       k_folds=cfg["k_folds"],
                       aux_fraction=cfg["aux_fraction"],
                       theta0_reps=cfg["theta0_reps"])
    out = cfg.get("output")
    if out:
        with open(f"{out}.csv", "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        with open(f"{out}.json", "w", encoding="utf-8") as fh:
            fh.write(report.sidecar(extra_config=_echo(cfg)))
    else:
        sys.stdout.write(report.to_csv())
    return EXIT_OK


def _echo(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg)}


def _write_output(cfg: dict, payload: dict, text: str):
    out = cfg.get("output")
    blob = json.dumps(payload, indent=2, sort_keys=True, default=float)
    if out:
        with open(f"{out}.json", "w", encoding="utf-8") as fh:
            fh.write(blob + "\n")
        with open(f"{out}.txt", "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "bounds-curve":
            return cmd_bounds_curve(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, CsvParseError, DegenerateDesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, EstimationFailure) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
