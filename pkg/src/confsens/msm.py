"""Marginal sensitivity model: conformal-weight bounds, cross-group bounds,
confounding-strength calibration from observed covariates, and the minimal
miscoverage admitting a finite interval.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .predictors import fit_propensity

__all__ = [
    "SensitivitySpec",
    "WeightBounds",
    "weight_bounds_same_arm",
    "weight_bounds_cross_arm",
    "calibrate_gamma",
    "gamma_summary",
    "emit_gamma_summary_csv",
    "min_miscoverage",
]


@dataclass(frozen=True)
class SensitivitySpec:
    """Confounding strength gamma >= 1, miscoverage alpha, arm, overlap floor."""

    gamma: float
    alpha: float
    t: int
    eta: float = 0.01

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ValueError("gamma must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.t not in (0, 1):
            raise ValueError("t must be 0 or 1")
        if not (0.0 < self.eta < 0.5):
            raise ValueError("eta must lie in (0, 0.5)")

    @property
    def lam(self) -> float:
        return math.log(self.gamma)


@dataclass(frozen=True)
class WeightBounds:
    """Per-unit conformal-weight boxes plus the target unit's box."""

    lo: np.ndarray
    hi: np.ndarray
    target_lo: float
    target_hi: float

    def __post_init__(self):
        if self.lo.shape != self.hi.shape:
            raise ValueError("lo/hi length mismatch")
        if np.any(self.lo <= 0) or np.any(self.hi < self.lo):
            raise ValueError("bounds must satisfy 0 < lo <= hi")
        if not (0 < self.target_lo <= self.target_hi):
            raise ValueError("target bounds must satisfy 0 < lo <= hi")


def _check_e(e_hat):
    e_hat = np.asarray(e_hat, dtype=float)
    if np.any(e_hat <= 0.0) or np.any(e_hat >= 1.0):
        raise ValueError("propensities must be pre-clipped into (0, 1)")
    return e_hat


def weight_bounds_same_arm(e_hat, gamma, t, p_t):
    """Bounds on the conformal weight when training and target share arm t.

    w_lo = (1 + (1/gamma) * odds) * p_t, w_hi = (1 + gamma * odds) * p_t
    with odds = ((1 - e)/e)^(2t-1).  The bounds are uniform in y.
    """
    e_hat = _check_e(e_hat)
    if gamma < 1.0:
        raise ValueError("gamma must be >= 1")
    odds = ((1.0 - e_hat) / e_hat) ** (2 * t - 1)
    w_lo = (1.0 + odds / gamma) * p_t
    w_hi = (1.0 + gamma * odds) * p_t
    return w_lo, w_hi


def weight_bounds_cross_arm(e_hat, gamma, t):
    """Bounds when training on arm 1-t and predicting Y(t) of the opposite
    group: [odds/gamma, gamma*odds] with odds = (e/(1-e))^(2t-1)."""
    e_hat = _check_e(e_hat)
    if gamma < 1.0:
        raise ValueError("gamma must be >= 1")
    odds = (e_hat / (1.0 - e_hat)) ** (2 * t - 1)
    return odds / gamma, gamma * odds


def calibrate_gamma(ds, eta=0.01, penalty=1e-4, step_size=0.1, n_iter=500):
    """Leave-one-covariate-out confounding-strength reference.

    For each unit i and covariate j, computes the odds ratio between the
    full propensity fit and the fit without covariate j, folded to >= 1.
    Returns an (n, p) matrix.
    """
    p = ds.covariate_dim
    if p < 2:
        raise ValueError("need at least 2 covariates")
    kwargs = dict(eta=eta, penalty=penalty, step_size=step_size, n_iter=n_iter)
    full = fit_propensity(ds.covariates, ds.treatment, **kwargs)
    e_full = np.clip(full.predict(ds.covariates), eta, 1.0 - eta)
    odds_full = e_full / (1.0 - e_full)
    out = np.empty((ds.n, p))
    for j in range(p):
        keep = [c for c in range(p) if c != j]
        drop = fit_propensity(ds.covariates[:, keep], ds.treatment, **kwargs)
        e_drop = np.clip(drop.predict(ds.covariates[:, keep]), eta, 1.0 - eta)
        ratio = odds_full / (e_drop / (1.0 - e_drop))
        out[:, j] = np.where(ratio >= 1.0, ratio, 1.0 / ratio)
    return out


def gamma_summary(gamma_matrix, names=None):
    """Per-covariate (label, median, p90, p99) rows for reporting."""
    gamma_matrix = np.asarray(gamma_matrix, dtype=float)
    p = gamma_matrix.shape[1]
    labels = names or [f"x{j + 1}" for j in range(p)]
    rows = []
    for j in range(p):
        col = gamma_matrix[:, j]
        rows.append({
            "covariate": labels[j],
            "median": float(np.median(col)),
            "p90": float(np.percentile(col, 90)),
            "p99": float(np.percentile(col, 99)),
        })
    return rows


def emit_gamma_summary_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["covariate", "median", "p90", "p99"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def min_miscoverage(e_cal, e_target, gamma, t, p_t) -> float:
    """Smallest miscoverage alpha* admitting a finite-length interval.

    alpha* = w_hi(X) / (sum_i w_lo(X_i) + w_hi(X)); a bounded interval at
    level 1 - alpha exists iff alpha > alpha*.
    """
    e_cal = np.asarray(e_cal, dtype=float)
    if e_cal.size == 0:
        raise ValueError("empty calibration set")
    w_lo, _ = weight_bounds_same_arm(e_cal, gamma, t, p_t)
    _, w_hi_t = weight_bounds_same_arm(np.array([e_target]), gamma, t, p_t)
    return float(w_hi_t[0] / (w_lo.sum() + w_hi_t[0]))
