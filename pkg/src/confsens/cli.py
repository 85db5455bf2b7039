"""Command-line entry points.

Subcommands: `generate` (synthetic datasets), `fit` (predictor fitting
report), `interval` (worst-case intervals for Y(t) from CSVs), `ite`
(effect intervals via the nested construction), `sweep` (full coverage
experiment), `calibrate` (confounding-strength reference table).

The `sweep` subcommand reads a JSON config file; individual flags
override file entries, and CONFSENS_OUTPUT_DIR overrides the output
directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .csa import csa_interval
from .cssa import cssa_interval
from .dataset import CsvSchema, arm_indices, emit_csv, ingest_csv, split
from .harness import ExperimentConfig, run_sweep
from .ite import bonferroni_ite, nested_ite_fit, nested_ite_predict
from .msm import SensitivitySpec, calibrate_gamma, emit_gamma_summary_csv, gamma_summary
from .oracle import SyntheticDGP, emit_truth_csv, generate
from .predictors import (
    fit_mean,
    fit_propensity,
    fit_quantile,
    marginal_treatment_prob,
)


def _schema_for(path):
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    covs = tuple(c for c in header if c not in ("t", "y"))
    return CsvSchema(covariates=covs)


def _load(path):
    return ingest_csv(path, _schema_for(path))


def _cmd_generate(args):
    dgp = SyntheticDGP(covariate_dim=args.dim,
                       heteroscedastic=args.heteroscedastic,
                       two_arm=args.two_arm)
    ds, truth = generate(dgp, args.n, seed=args.seed)
    emit_csv(ds, args.out)
    if args.truth_out:
        emit_truth_csv(truth, args.truth_out)
    print(f"wrote {ds.n} units to {args.out}")


def _cmd_fit(args):
    ds = _load(args.data)
    propensity = fit_propensity(ds.covariates, ds.treatment)
    report = {
        "n": ds.n,
        "covariate_dim": ds.covariate_dim,
        "p_treated": marginal_treatment_prob(ds.treatment, 1),
        "propensity": {
            "intercept": float(propensity.intercept_),
            "coefficients": [float(b) for b in propensity.beta_],
            "feature_means": [float(v) for v in propensity.mean_],
            "feature_sds": [float(v) for v in propensity.sd_],
            "clip": propensity.eta,
        },
    }
    for t in (0, 1):
        idx = arm_indices(ds, t)
        mu = fit_mean(ds.covariates[idx], ds.outcome[idx])
        report[f"mean_model_arm{t}"] = {"kind": "knn", "k": mu.k,
                                        "n_fit": int(idx.size)}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(f"wrote fit report to {args.out}")


def _fit_pipeline(ds, t, alpha, seed):
    plan = split(ds, (0.5, 0.5), seed)
    prelim = ds.subset(plan.preliminary_idx)
    cal = ds.subset(plan.calibration_idx)
    pre_idx = arm_indices(prelim, t)
    cal_idx = arm_indices(cal, t)
    mu_hat = fit_mean(prelim.covariates[pre_idx], prelim.outcome[pre_idx])
    q_hat = fit_quantile(prelim.covariates[pre_idx], prelim.outcome[pre_idx],
                         (alpha / 2.0, 1.0 - alpha / 2.0))
    propensity = fit_propensity(prelim.covariates, prelim.treatment)
    p_t = marginal_treatment_prob(prelim.treatment, t)
    return (mu_hat, q_hat, propensity, p_t, cal.covariates[cal_idx],
            cal.outcome[cal_idx], cal)


def _cmd_interval(args):
    ds = _load(args.data)
    targets = _load(args.target) if _has_ty(args.target) else None
    x_target = (targets.covariates if targets is not None
                else _covariates_only(args.target))
    (mu_hat, q_hat, propensity, p_t, cal_x, cal_y,
     cal) = _fit_pipeline(ds, args.t, args.alpha, args.seed)
    spec = SensitivitySpec(gamma=args.gamma, alpha=args.alpha, t=args.t)
    rows = []
    for i in range(x_target.shape[0]):
        x = x_target[i]
        if args.method == "cssa":
            c = cssa_interval(mu_hat, propensity, cal_x, cal_y, x, spec,
                              p_t, cal.covariates, cal.treatment,
                              score=args.score, q_hat=q_hat)
        else:
            c = csa_interval(mu_hat, propensity, cal_x, cal_y, x, spec,
                             p_t, score=args.score, q_hat=q_hat)
        rows.append((c.lower, c.upper, c.threshold,
                     int(not c.bounded)))
    _write_interval_csv(args.out, rows)
    print(f"wrote {len(rows)} intervals to {args.out}")


def _cmd_ite(args):
    ds = _load(args.data)
    x_target = (_load(args.target).covariates if _has_ty(args.target)
                else _covariates_only(args.target))
    if args.method == "nested":
        model = nested_ite_fit(ds, args.gamma, args.alpha, seed=args.seed)
        out = nested_ite_predict(model, x_target)
    else:
        out = []
        arm = {}
        for t in (0, 1):
            (mu_hat, _q, propensity, p_t, cal_x, cal_y,
             _cal) = _fit_pipeline(ds, t, args.alpha / 2.0, args.seed)
            spec = SensitivitySpec(gamma=args.gamma, alpha=args.alpha / 2.0,
                                   t=t)
            arm[t] = [csa_interval(mu_hat, propensity, cal_x, cal_y,
                                   x_target[i], spec, p_t)
                      for i in range(x_target.shape[0])]
        split_pair = (args.alpha / 2.0, args.alpha / 2.0)
        out = [bonferroni_ite(c1, c0, alpha_split=split_pair)
               for c1, c0 in zip(arm[1], arm[0])]
    _write_ite_csv(args.out, out, args.gamma, args.alpha)
    print(f"wrote {len(out)} effect intervals to {args.out}")


def _write_ite_csv(path, intervals, gamma, alpha):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "lower", "upper", "method", "gamma", "alpha"])
        for i, c in enumerate(intervals):
            writer.writerow([
                i,
                "" if c.lower is None else format(c.lower, ".17g"),
                "" if c.upper is None else format(c.upper, ".17g"),
                c.method, gamma, alpha,
            ])


def _cmd_sweep(args):
    cfg_dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg_dict = json.load(fh)
    overrides = {
        "methods": tuple(args.methods.split(",")) if args.methods else None,
        "gammas": (tuple(float(g) for g in args.gammas.split(","))
                   if args.gammas else None),
        "alpha": args.alpha,
        "n_train": args.n_train,
        "n_target": args.n_target,
        "n_trials": args.n_trials,
        "heteroscedastic": args.heteroscedastic or None,
        "two_arm": args.two_arm or None,
        "base_seed": args.seed,
        "paper_scale": args.paper_scale or None,
        "output_dir": args.out_dir,
    }
    for key, value in overrides.items():
        if value is not None:
            cfg_dict[key] = value
    for key in ("methods", "gammas"):
        if key in cfg_dict:
            cfg_dict[key] = tuple(cfg_dict[key])
    cfg_dict.setdefault("output_dir", ".")
    cfg = ExperimentConfig(**cfg_dict)
    _, summary = run_sweep(cfg)
    for row in summary:
        print(f"{row['method']:>10}  gamma={row['gamma']:<4g} "
              f"coverage={row['coverage_mean']:.3f} "
              f"({row['coverage_sd']:.3f})  "
              f"width={row['width_mean']:.3f}  "
              f"unbounded={row['n_unbounded']}")


def _cmd_calibrate(args):
    ds = _load(args.data)
    matrix = calibrate_gamma(ds)
    rows = gamma_summary(matrix, names=ds.names)
    emit_gamma_summary_csv(rows, args.out)
    print(f"wrote confounding-strength summary for "
          f"{len(rows)} covariates to {args.out}")


def _has_ty(path):
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    return "t" in header and "y" in header


def _covariates_only(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise ValueError("no data rows")
    del header
    return np.array(rows)


def _write_interval_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lower", "upper", "threshold", "unbounded"])
        for lower, upper, threshold, unbounded in rows:
            writer.writerow([
                "" if lower is None else format(lower, ".17g"),
                "" if upper is None else format(upper, ".17g"),
                threshold if threshold == "" else format(threshold, ".17g"),
                unbounded,
            ])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="confsens",
        description="Sensitivity-aware conformal intervals for "
                    "treatment effects")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--heteroscedastic", action="store_true")
    p.add_argument("--two-arm", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("fit", help="fit predictors and report them")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("interval", help="worst-case intervals for Y(t)")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--t", type=int, default=1, choices=(0, 1))
    p.add_argument("--method", default="csa", choices=("csa", "cssa"))
    p.add_argument("--score", default="mean", choices=("mean", "cqr"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_interval)

    p = sub.add_parser("ite", help="treatment-effect intervals")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--method", default="nested",
                   choices=("nested", "bonferroni"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ite)

    p = sub.add_parser("sweep", help="coverage/length experiment")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--methods", default=None)
    p.add_argument("--gammas", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--n-target", type=int, default=None)
    p.add_argument("--n-trials", type=int, default=None)
    p.add_argument("--heteroscedastic", action="store_true")
    p.add_argument("--two-arm", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("calibrate", help="confounding-strength table")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_calibrate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
