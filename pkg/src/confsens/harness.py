"""Experiment driver: coverage/length sweeps over confounding-strength
grids against the synthetic oracle, plus the diagnostics used to judge
them (shrinkage sharpness, per-trial coverage law, positivity fractions,
propensity-estimation slack).

Outputs are tidy CSV tables (one row per measurement) and a JSON run
manifest; no plotting.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .conformal import score_abs_residual, score_cqr, wcp_threshold_nuc_batch
from .csa import csa_threshold_batch
from .cssa import BalanceConstraint, balance_rhs, cssa_threshold_batch
from .dataset import arm_indices, split
from .ite import bonferroni_ite, nested_ite_fit, nested_ite_predict
from .msm import SensitivitySpec, weight_bounds_same_arm
from .oracle import SyntheticDGP, generate, sample_target_outcomes
from .predictors import (
    fit_mean,
    fit_propensity,
    fit_quantile,
    marginal_treatment_prob,
)

__all__ = [
    "METHODS",
    "ExperimentConfig",
    "TrialRecord",
    "run_trial",
    "run_sweep",
    "summarize",
    "write_outputs",
    "shrinkage_sharpness",
    "beta_coverage_trials",
    "beta_coverage_check",
    "positivity_summary",
    "delta_slack_diagnostic",
]

METHODS = ("csa-m", "csa-q", "cssa-m", "ite-nuc", "bonferroni", "nested")

_PAPER_SIZES = (3000, 10000, 100)


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative sweep description; fully determines all randomness."""

    methods: tuple = ("csa-m", "ite-nuc")
    gammas: tuple = (1.0, 1.5, 2.0, 3.0, 4.0)
    alpha: float = 0.2
    n_train: int = 2000
    n_target: int = 2000
    n_trials: int = 20
    heteroscedastic: bool = False
    two_arm: bool = False
    base_seed: int = 0
    paper_scale: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods: {unknown}")
        if any(g < 1.0 for g in self.gammas):
            raise ValueError("gamma grid entries must be >= 1")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))

    @property
    def sizes(self):
        """(n_train, n_target, n_trials) after the paper-scale override."""
        if self.paper_scale:
            return _PAPER_SIZES
        return (self.n_train, self.n_target, self.n_trials)


@dataclass(frozen=True)
class TrialRecord:
    """Per-(method, gamma, trial) aggregates plus optional raw arrays."""

    method: str
    gamma: float
    trial: int
    seed: int
    coverage: float
    mean_width: float
    n_unbounded: int
    n_target: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    tau: np.ndarray | None = None


def _coverage_and_width(lower, upper, tau):
    """Aggregate arrays with possibly infinite endpoints; an unbounded
    side always covers, and unbounded intervals are excluded from the
    width mean (their count is reported)."""
    covered = ((~np.isfinite(lower)) | (tau >= lower)) & \
              ((~np.isfinite(upper)) | (tau <= upper))
    bounded = np.isfinite(lower) & np.isfinite(upper)
    widths = upper[bounded] - lower[bounded]
    mean_width = float(widths.mean()) if widths.size else np.nan
    return float(covered.mean()), mean_width, int((~bounded).sum())


class _TrialState:
    """Everything fit once per trial and shared across gammas/methods."""

    def __init__(self, cfg: ExperimentConfig, trial: int):
        n_train, n_target, _ = cfg.sizes
        self.seed = cfg.base_seed + trial
        ss = np.random.SeedSequence(self.seed)
        s_train, s_target, s_truth, s_nested = ss.spawn(4)
        dgp = SyntheticDGP(heteroscedastic=cfg.heteroscedastic,
                           two_arm=cfg.two_arm)
        self.dgp = dgp
        self.train, _ = generate(dgp, n_train,
                                 seed=np.random.default_rng(s_train))
        target_ds, self.truth = generate(
            dgp, n_target, seed=np.random.default_rng(s_target))
        self.x_target = target_ds.covariates
        self.truth_rng = np.random.default_rng(s_truth)
        self.nested_seed = s_nested

        plan = split(self.train, (0.5, 0.5), self.seed)
        self.prelim = self.train.subset(plan.preliminary_idx)
        self.cal = self.train.subset(plan.calibration_idx)
        self.propensity = fit_propensity(self.prelim.covariates,
                                         self.prelim.treatment)
        self.e_target = self.propensity.predict(self.x_target)
        self.e_cal_full = self.propensity.predict(self.cal.covariates)
        self.alpha = cfg.alpha
        self._arm = {}
        self._nested = {}

    def arm(self, t):
        """Per-arm fits, calibration scores and propensities (cached)."""
        if t in self._arm:
            return self._arm[t]
        pre_idx = arm_indices(self.prelim, t)
        cal_idx = arm_indices(self.cal, t)
        mu_hat = fit_mean(self.prelim.covariates[pre_idx],
                          self.prelim.outcome[pre_idx], scale="relevance")
        levels = (self.alpha / 2.0, 1.0 - self.alpha / 2.0)
        q_hat = fit_quantile(self.prelim.covariates[pre_idx],
                             self.prelim.outcome[pre_idx], levels,
                             scale="relevance")
        cal_x = self.cal.covariates[cal_idx]
        cal_y = self.cal.outcome[cal_idx]
        state = {
            "p_t": marginal_treatment_prob(self.prelim.treatment, t),
            "mu_hat": mu_hat,
            "q_hat": q_hat,
            "e_cal": self.e_cal_full[cal_idx],
            "scores_mean": score_abs_residual(mu_hat, cal_x, cal_y),
            "scores_cqr": score_cqr(q_hat, cal_x, cal_y),
            "mu_target": mu_hat.predict(self.x_target),
            "q_target": q_hat.predict(self.x_target),
            "cal_idx": cal_idx,
        }
        self._arm[t] = state
        return state

    def nested_model(self, gamma):
        if gamma not in self._nested:
            self._nested[gamma] = nested_ite_fit(
                self.train, gamma, self.alpha,
                seed=self.nested_seed)
        return self._nested[gamma]

    def draw_tau(self, gamma):
        """One MSM-consistent potential-outcome draw per target unit."""
        y1, _ = sample_target_outcomes(self.truth, 1, gamma, self.truth_rng)
        if not self.dgp.two_arm:
            return y1
        y0, _ = sample_target_outcomes(self.truth, 0, gamma, self.truth_rng)
        return y1 - y0


def _arm_interval(state: _TrialState, t, gamma, alpha, method):
    """(lower, upper) arrays over targets for one per-arm method."""
    arm = state.arm(t)
    spec = SensitivitySpec(gamma=gamma, alpha=alpha, t=t)
    if method == "csa-q":
        scores = arm["scores_cqr"]
    else:
        scores = arm["scores_mean"]
    if method == "ite-nuc":
        thr = wcp_threshold_nuc_batch(scores, arm["e_cal"], state.e_target,
                                      t, arm["p_t"], alpha)
    elif method in ("csa-m", "csa-q"):
        thr = csa_threshold_batch(scores, arm["e_cal"], state.e_target,
                                  spec, arm["p_t"])
    elif method == "cssa-m":
        if gamma == 1.0:  # weight boxes collapse; constraints are inert
            thr = csa_threshold_batch(scores, arm["e_cal"], state.e_target,
                                      spec, arm["p_t"])
        else:
            lo_c, hi_c = weight_bounds_same_arm(arm["e_cal"], gamma, t,
                                                arm["p_t"])
            _, hi_t = weight_bounds_same_arm(state.e_target, gamma, t,
                                             arm["p_t"])
            rhs = balance_rhs(state.cal.treatment, state.e_cal_full,
                              state.e_cal_full, t)
            con = BalanceConstraint(
                coefficients=arm["e_cal"] / arm["e_cal"].shape[0], rhs=rhs)
            thr = cssa_threshold_batch(scores, lo_c, hi_c, [con], alpha,
                                       hi_t)
    else:
        raise ValueError(f"unknown method {method!r}")
    if method == "csa-q":
        q_lo, q_hi = arm["q_target"]
        return q_lo - thr, q_hi + thr
    mu = arm["mu_target"]
    return mu - thr, mu + thr


def _ite_interval(state: _TrialState, gamma, alpha, method):
    if method in ("csa-m", "csa-q", "cssa-m", "ite-nuc"):
        lo1, hi1 = _arm_interval(state, 1, gamma, alpha, method)
        if not state.dgp.two_arm:
            return lo1, hi1
        lo0, hi0 = _arm_interval(state, 0, gamma, alpha, method)
        # difference of potential-outcome intervals, one per target
        return lo1 - hi0, hi1 - lo0
    if method == "bonferroni":
        lo1, hi1 = _arm_interval(state, 1, gamma, alpha / 2.0, "csa-m")
        lo0, hi0 = _arm_interval(state, 0, gamma, alpha / 2.0, "csa-m")
        return lo1 - hi0, hi1 - lo0
    if method == "nested":
        model = state.nested_model(gamma)
        out = nested_ite_predict(model, state.x_target)
        lower = np.array([np.nan if c.lower_unbounded else c.lower
                          for c in out])
        upper = np.array([np.nan if c.upper_unbounded else c.upper
                          for c in out])
        lower[~np.isfinite(lower)] = -np.inf
        upper[~np.isfinite(upper)] = np.inf
        return lower, upper
    raise ValueError(f"unknown method {method!r}")


def run_trial(cfg: ExperimentConfig, trial: int, keep_targets=False):
    """All (method, gamma) records for one trial; models are fit once."""
    state = _TrialState(cfg, trial)
    n_target = state.x_target.shape[0]
    records = []
    for gamma in cfg.gammas:
        tau = state.draw_tau(gamma)
        for method in cfg.methods:
            lower, upper = _ite_interval(state, gamma, cfg.alpha, method)
            cov, width, n_unb = _coverage_and_width(lower, upper, tau)
            records.append(TrialRecord(
                method=method, gamma=gamma, trial=trial, seed=state.seed,
                coverage=cov, mean_width=width, n_unbounded=n_unb,
                n_target=n_target,
                lower=lower if keep_targets else None,
                upper=upper if keep_targets else None,
                tau=tau if keep_targets else None))
    return records


def run_sweep(cfg: ExperimentConfig, keep_targets=False):
    """Run all trials; optionally write tidy CSV + manifest outputs."""
    _, _, n_trials = cfg.sizes
    records = []
    for trial in range(n_trials):
        records.extend(run_trial(cfg, trial, keep_targets=keep_targets))
    summary = summarize(records)
    if cfg.output_dir is not None:
        write_outputs(cfg, records, summary)
    return records, summary


def summarize(records):
    """One row per (method, gamma): coverage/width mean and sd across
    trials, plus the total count of unbounded intervals."""
    keys = sorted({(r.method, r.gamma) for r in records},
                  key=lambda k: (k[0], k[1]))
    rows = []
    for method, gamma in keys:
        sel = [r for r in records if r.method == method and r.gamma == gamma]
        cov = np.array([r.coverage for r in sel])
        width = np.array([r.mean_width for r in sel])
        width = width[np.isfinite(width)]
        rows.append({
            "method": method,
            "gamma": gamma,
            "coverage_mean": float(cov.mean()),
            "coverage_sd": float(cov.std(ddof=1)) if cov.size > 1 else 0.0,
            "width_mean": float(width.mean()) if width.size else np.nan,
            "width_sd": (float(width.std(ddof=1)) if width.size > 1 else 0.0),
            "n_unbounded": int(sum(r.n_unbounded for r in sel)),
            "n_trials": len(sel),
        })
    return rows


def write_outputs(cfg: ExperimentConfig, records, summary):
    out_dir = os.environ.get("CONFSENS_OUTPUT_DIR", cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "records.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "gamma", "trial", "seed", "coverage",
                         "mean_width", "n_unbounded", "n_target"])
        for r in records:
            writer.writerow([r.method, r.gamma, r.trial, r.seed,
                             format(r.coverage, ".17g"),
                             format(r.mean_width, ".17g"),
                             r.n_unbounded, r.n_target])
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary[0].keys()))
        writer.writeheader()
        for row in summary:
            writer.writerow(row)
    manifest = {
        "config": {k: v for k, v in asdict(cfg).items()},
        "resolved_sizes": dict(zip(("n_train", "n_target", "n_trials"),
                                   cfg.sizes)),
        "seeds": [cfg.base_seed + i for i in range(cfg.sizes[2])],
        "versions": {
            "confsens": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def shrinkage_sharpness(lower, upper, tau, alpha, factors=None):
    """Coverage after shrinking interval length by each factor (centers
    fixed).  Returns (table, max_factor_preserving, n_excluded) where the
    table rows are (factor, coverage) and unbounded intervals are dropped.
    """
    if factors is None:
        factors = np.round(np.linspace(0.0, 0.3, 31), 4)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    tau = np.asarray(tau, dtype=float)
    bounded = np.isfinite(lower) & np.isfinite(upper)
    n_excluded = int((~bounded).sum())
    center = (lower[bounded] + upper[bounded]) / 2.0
    half = (upper[bounded] - lower[bounded]) / 2.0
    dev = np.abs(tau[bounded] - center)
    table = []
    max_factor = None
    for f in factors:
        cov = float(np.mean(dev <= (1.0 - f) * half))
        table.append((float(f), cov))
        if cov >= 1.0 - alpha:
            max_factor = float(f)
    return table, max_factor, n_excluded


def beta_coverage_trials(n_cal, n_trials, alpha, seed=0, shifted=False,
                         n_target=4000):
    """Per-trial coverages of split conformal with a fresh calibration
    draw each trial, for checking the finite-sample coverage law.

    Scores are sigma(x) * |N(0, 1)| with sigma(x) = 0.5 + x.  In the
    reference run calibration and target share the covariate law, so the
    threshold is the plain conformal order statistic and each trial's
    coverage (computed in closed form from the known score law) follows
    Beta(n_cal + 1 - floor((n_cal+1) alpha), floor((n_cal+1) alpha)).
    With `shifted=True` the calibration covariates are tilted while the
    weights stay uniform — the negative control that breaks the law.
    """
    rng = np.random.default_rng(seed)
    coverages = np.empty(n_trials)
    x_target = rng.uniform(size=n_target)
    sig_target = 0.5 + x_target
    for i in range(n_trials):
        u = rng.uniform(size=n_cal)
        x_cal = u ** (1.0 / 3.0) if shifted else u  # tilt density 3x^2
        scores = (0.5 + x_cal) * np.abs(rng.standard_normal(n_cal))
        k = int(np.ceil((1.0 - alpha) * (n_cal + 1)))
        thr = np.sort(scores)[k - 1] if k <= n_cal else np.inf
        # exact per-target coverage of [..] given the threshold
        per_target = 2.0 * stats.norm.cdf(thr / sig_target) - 1.0
        coverages[i] = float(per_target.mean())
    return coverages


def beta_coverage_check(coverages, n_cal, alpha, level=0.01):
    """Kolmogorov-Smirnov test of per-trial coverages against
    Beta(n_cal + 1 - floor((n_cal+1) alpha), floor((n_cal+1) alpha)).

    Returns (statistic, p_value, passed); requires >= 50 trials, each with
    an independent calibration draw.
    """
    coverages = np.asarray(coverages, dtype=float)
    if coverages.size < 50:
        raise ValueError("need at least 50 independent trials")
    b = int(np.floor((n_cal + 1) * alpha))
    a = n_cal + 1 - b
    stat, pvalue = stats.kstest(coverages, stats.beta(a, b).cdf)
    return float(stat), float(pvalue), bool(pvalue >= level)


def positivity_summary(lower, upper):
    """(fraction of all-positive intervals, fraction of all-negative);
    intervals with an unbounded side count as neither."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.shape[0]
    if n == 0:
        return 0.0, 0.0
    bounded = np.isfinite(lower) & np.isfinite(upper)
    pos = bounded & (lower > 0)
    neg = bounded & (upper < 0)
    return float(pos.mean()), float(neg.mean())


def delta_slack_diagnostic(e_true, e_hat, gamma, t, p_t) -> float:
    """Monte Carlo slack from propensity estimation:
    (gamma / 2) * p_t * E|1/arm_prob(e_hat) - 1/arm_prob(e_true)| over the
    arm-t covariate draws supplied."""
    if e_true is None:
        raise ValueError("requires oracle truth records")
    e_true = np.asarray(e_true, dtype=float)
    e_hat = np.asarray(e_hat, dtype=float)
    arm_true = e_true if t == 1 else 1.0 - e_true
    arm_hat = e_hat if t == 1 else 1.0 - e_hat
    return float(gamma / 2.0 * p_t *
                 np.mean(np.abs(1.0 / arm_hat - 1.0 / arm_true)))
