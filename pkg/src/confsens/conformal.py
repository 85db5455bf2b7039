"""Core conformal machinery.

Nonconformity scores, weighted discrete quantiles with stable tie
handling, and the baseline weighted conformal interval that is valid
under unconfoundedness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PredictiveInterval",
    "WeightedDiscreteDist",
    "score_abs_residual",
    "score_cqr",
    "weighted_quantile",
    "wcp_threshold_nuc",
    "wcp_threshold_nuc_batch",
    "wcp_interval_nuc",
    "mean_score_interval",
    "cqr_score_interval",
]

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class PredictiveInterval:
    """Interval endpoints plus the quantile threshold that produced them.

    An unbounded side is flagged explicitly and its endpoint is None;
    no large-float sentinels are used.
    """

    lower: float | None
    upper: float | None
    threshold: float
    lower_unbounded: bool = False
    upper_unbounded: bool = False

    @property
    def bounded(self) -> bool:
        return not (self.lower_unbounded or self.upper_unbounded)

    @property
    def width(self) -> float:
        if not self.bounded:
            return np.inf
        return self.upper - self.lower

    def contains(self, y) -> bool:
        lo_ok = self.lower_unbounded or y >= self.lower
        hi_ok = self.upper_unbounded or y <= self.upper
        return bool(lo_ok and hi_ok)


class WeightedDiscreteDist:
    """Discrete distribution sum_i m_i * delta(atom_i); atoms may be +inf."""

    def __init__(self, atoms, masses):
        atoms = np.asarray(atoms, dtype=float)
        masses = np.asarray(masses, dtype=float)
        if atoms.shape != masses.shape or atoms.ndim != 1:
            raise ValueError("atoms and masses must be equal-length vectors")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        total = masses.sum()
        if total <= 0:
            raise ValueError("masses sum to zero")
        # renormalize; guards accumulated rounding in long weight sums
        self.atoms = atoms
        self.masses = masses / total
        assert abs(self.masses.sum() - 1.0) <= 1e-9

    @classmethod
    def from_weights(cls, atoms, weights):
        return cls(atoms, weights)


def score_abs_residual(mu_hat, x, y):
    """Absolute-residual nonconformity score |y - mu_hat(x)|."""
    return np.abs(np.asarray(y, dtype=float) - mu_hat.predict(x))


def score_cqr(q_hat, x, y):
    """CQR score max(q_lo(x) - y, y - q_hi(x)); negative inside the band."""
    q_lo, q_hi = q_hat.predict(x)
    y = np.asarray(y, dtype=float)
    return np.maximum(q_lo - y, y - q_hi)


def weighted_quantile(dist: WeightedDiscreteDist, level: float) -> float:
    """Smallest atom whose cumulative mass reaches `level`.

    Atoms are sorted ascending with ties merged (mass of equal atoms
    accumulates before the comparison, stable in the original order).
    Returns +inf when only an infinite atom reaches the level.
    """
    if not (0.0 <= level <= 1.0):
        raise ValueError("level must lie in [0, 1]")
    order = np.argsort(dist.atoms, kind="stable")
    atoms = dist.atoms[order]
    cum = np.cumsum(dist.masses[order])
    # group-merge equal atoms: comparison uses the last cumsum of each group
    is_last = np.ones(atoms.shape[0], dtype=bool)
    is_last[:-1] = atoms[1:] != atoms[:-1]
    g_atoms = atoms[is_last]
    g_cum = cum[is_last]
    hit = np.flatnonzero(g_cum >= level - _NORM_TOL)
    if hit.size == 0:
        # only reachable through rounding at level == 1
        return float(g_atoms[-1])
    return float(g_atoms[hit[0]])


def wcp_threshold_nuc(scores, e_cal, e_target, t, p_t, alpha) -> float:
    """Score threshold of weighted conformal prediction under
    unconfoundedness.

    Calibration weights are p(T=t) / arm-probability(x_i); the +inf
    sentinel carries the target weight.  Returns the (1 - alpha) weighted
    quantile (possibly +inf).
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty calibration set")
    e_cal = np.asarray(e_cal, dtype=float)
    arm_cal = e_cal if t == 1 else 1.0 - e_cal
    arm_tgt = e_target if t == 1 else 1.0 - e_target
    w_cal = p_t / arm_cal
    w_tgt = p_t / arm_tgt
    atoms = np.append(scores, np.inf)
    weights = np.append(w_cal, w_tgt)
    dist = WeightedDiscreteDist.from_weights(atoms, weights)
    return weighted_quantile(dist, 1.0 - alpha)


def wcp_threshold_nuc_batch(scores, e_cal, e_target, t, p_t, alpha):
    """Unconfoundedness thresholds for an array of target propensities.

    Vectorized equivalent of `wcp_threshold_nuc`: one sorted cumulative
    pass over the calibration weights, then a search per target.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty calibration set")
    e_cal = np.asarray(e_cal, dtype=float)
    e_target = np.atleast_1d(np.asarray(e_target, dtype=float))
    arm_cal = e_cal if t == 1 else 1.0 - e_cal
    arm_tgt = e_target if t == 1 else 1.0 - e_target
    w_cal = p_t / arm_cal
    w_tgt = p_t / arm_tgt
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    cum = np.cumsum(w_cal[order])
    need = (1.0 - alpha) * (cum[-1] + w_tgt)
    idx = np.searchsorted(cum, need - _NORM_TOL * (cum[-1] + w_tgt),
                          side="left")
    ext = np.append(sorted_scores, np.inf)
    return ext[idx]


def mean_score_interval(mu_target, threshold) -> PredictiveInterval:
    """Assemble [mu - Q, mu + Q] for the absolute-residual score."""
    if not np.isfinite(threshold):
        return PredictiveInterval(None, None, np.inf, True, True)
    return PredictiveInterval(float(mu_target - threshold),
                              float(mu_target + threshold), float(threshold))


def cqr_score_interval(q_lo_target, q_hi_target, threshold) -> PredictiveInterval:
    """Assemble [q_lo - Q, q_hi + Q] for the CQR score."""
    if not np.isfinite(threshold):
        return PredictiveInterval(None, None, np.inf, True, True)
    return PredictiveInterval(float(q_lo_target - threshold),
                              float(q_hi_target + threshold), float(threshold))


def wcp_interval_nuc(mu_hat, propensity, cal_x, cal_y, x_target, t, p_t,
                     alpha, score="mean", q_hat=None) -> PredictiveInterval:
    """Weighted conformal interval for Y(t) assuming unconfoundedness."""
    cal_x = np.asarray(cal_x, dtype=float)
    e_cal = propensity.predict(cal_x)
    x_target = np.asarray(x_target, dtype=float).reshape(1, -1)
    e_target = float(propensity.predict(x_target)[0])
    if score == "mean":
        scores = score_abs_residual(mu_hat, cal_x, cal_y)
        q = wcp_threshold_nuc(scores, e_cal, e_target, t, p_t, alpha)
        return mean_score_interval(float(mu_hat.predict(x_target)[0]), q)
    elif score == "cqr":
        if q_hat is None:
            raise ValueError("cqr score requires a quantile predictor")
        scores = score_cqr(q_hat, cal_x, cal_y)
        q = wcp_threshold_nuc(scores, e_cal, e_target, t, p_t, alpha)
        lo, hi = q_hat.predict(x_target)
        return cqr_score_interval(float(lo[0]), float(hi[0]), q)
    raise ValueError(f"unknown score kind {score!r}")
