"""Worst-case predictive intervals over the sensitivity-model class.

The quantile maximization over box-bounded conformal weights has a corner
optimum: weights at the largest scores sit at their upper bounds, the rest
at their lower bounds.  The greedy pass flips weights from the top score
(the +inf sentinel) downward until the normalized flipped tail strictly
exceeds alpha; the threshold is the score at the last flip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import (
    PredictiveInterval,
    cqr_score_interval,
    mean_score_interval,
    score_abs_residual,
    score_cqr,
)
from .msm import SensitivitySpec, weight_bounds_same_arm

__all__ = [
    "GreedyResult",
    "greedy_max_quantile",
    "greedy_threshold_batch",
    "csa_threshold",
    "csa_threshold_batch",
    "csa_interval",
    "union_interval_check",
]


@dataclass(frozen=True)
class GreedyResult:
    """Outcome of the greedy quantile maximization.

    `flip_index` is the 0-based position of the returned score among the
    n+1 sorted scores (sentinel last); positions >= flip_index carry their
    upper bounds in `weights`, positions below carry their lower bounds.
    """

    threshold: float
    flip_index: int
    weights: np.ndarray
    iterations: int

    @property
    def unbounded(self) -> bool:
        return not np.isfinite(self.threshold)


def greedy_max_quantile(scores, lo, hi, alpha) -> GreedyResult:
    """Maximize the (1 - alpha) weighted quantile over box weights.

    `scores` must be ascending with a +inf sentinel last; `lo`/`hi` are
    aligned weight bounds.  Work is O(m) for m flips, O(n) worst case.
    """
    scores = np.asarray(scores, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m = scores.shape[0]
    if lo.shape[0] != m or hi.shape[0] != m:
        raise ValueError("bounds are misaligned with scores")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if m < 2 or not np.isinf(scores[-1]):
        raise ValueError("scores must end with the +inf sentinel")
    if np.any(np.diff(scores[:-1]) < 0):
        raise ValueError("scores must be sorted ascending")

    total = lo.sum()
    tail = 0.0
    k = m  # 1-based flip position, moving downward
    iterations = 0
    while k >= 1:
        i = k - 1
        total += hi[i] - lo[i]
        tail += hi[i]
        iterations += 1
        if tail > alpha * total:
            break
        k -= 1
    k = max(k, 1)
    weights = lo.copy()
    weights[k - 1:] = hi[k - 1:]
    return GreedyResult(threshold=float(scores[k - 1]), flip_index=k - 1,
                        weights=weights, iterations=iterations)


def greedy_threshold_batch(scores_sorted, lo_c, hi_c, hi_target, alpha):
    """Greedy thresholds for many target points sharing one calibration set.

    `scores_sorted` are the n ascending calibration scores (no sentinel);
    `lo_c`/`hi_c` the aligned calibration weight bounds; `hi_target` the
    per-target sentinel upper bounds.  Equivalent to running
    `greedy_max_quantile` once per target, vectorized over targets.
    """
    scores_sorted = np.asarray(scores_sorted, dtype=float)
    lo_c = np.asarray(lo_c, dtype=float)
    hi_c = np.asarray(hi_c, dtype=float)
    hi_target = np.atleast_1d(np.asarray(hi_target, dtype=float))
    n = scores_sorted.shape[0]
    # flip position j = 0..n over the n+1 atoms (sentinel at j = n)
    pre_lo = np.concatenate([[0.0], np.cumsum(lo_c)])          # sum lo[:j]
    suf_hi = np.concatenate([np.cumsum(hi_c[::-1])[::-1], [0.0]])  # sum hi[j:]
    tail = suf_hi[:, None] + hi_target[None, :]
    total = pre_lo[:, None] + tail
    cond = tail > alpha * total
    rev = cond[::-1]
    first = rev.argmax(axis=0)
    j_star = np.where(rev.any(axis=0), n - first, 0)
    ext = np.append(scores_sorted, np.inf)
    return ext[j_star]


def csa_threshold(scores, e_cal, e_target, spec: SensitivitySpec, p_t) -> GreedyResult:
    """Sort scores, attach the sentinel, derive same-arm weight bounds from
    the propensities, and run the greedy maximization."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty calibration set")
    e_cal = np.asarray(e_cal, dtype=float)
    order = np.argsort(scores, kind="stable")
    lo_c, hi_c = weight_bounds_same_arm(e_cal[order], spec.gamma, spec.t, p_t)
    lo_t, hi_t = weight_bounds_same_arm(np.array([e_target]), spec.gamma,
                                        spec.t, p_t)
    v = np.append(scores[order], np.inf)
    lo = np.append(lo_c, lo_t)
    hi = np.append(hi_c, hi_t)
    return greedy_max_quantile(v, lo, hi, spec.alpha)


def csa_threshold_batch(scores, e_cal, e_target, spec: SensitivitySpec, p_t):
    """Worst-case thresholds for an array of target propensities."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty calibration set")
    order = np.argsort(scores, kind="stable")
    lo_c, hi_c = weight_bounds_same_arm(np.asarray(e_cal, dtype=float)[order],
                                        spec.gamma, spec.t, p_t)
    _, hi_t = weight_bounds_same_arm(np.asarray(e_target, dtype=float),
                                     spec.gamma, spec.t, p_t)
    return greedy_threshold_batch(scores[order], lo_c, hi_c, hi_t, spec.alpha)


def csa_interval(mu_hat, propensity, cal_x, cal_y, x_target,
                 spec: SensitivitySpec, p_t, score="mean",
                 q_hat=None) -> PredictiveInterval:
    """Worst-case predictive interval for Y(t) at one target point.

    The weight bounds are uniform in y, so the threshold is computed once
    and the interval assembled analytically from the fitted predictor.
    """
    cal_x = np.asarray(cal_x, dtype=float)
    e_cal = propensity.predict(cal_x)
    x_target = np.asarray(x_target, dtype=float).reshape(1, -1)
    e_target = float(propensity.predict(x_target)[0])
    if score == "mean":
        scores = score_abs_residual(mu_hat, cal_x, cal_y)
        res = csa_threshold(scores, e_cal, e_target, spec, p_t)
        return mean_score_interval(float(mu_hat.predict(x_target)[0]),
                                   res.threshold)
    elif score == "cqr":
        if q_hat is None:
            raise ValueError("cqr score requires a quantile predictor")
        scores = score_cqr(q_hat, cal_x, cal_y)
        res = csa_threshold(scores, e_cal, e_target, spec, p_t)
        lo, hi = q_hat.predict(x_target)
        return cqr_score_interval(float(lo[0]), float(hi[0]), res.threshold)
    raise ValueError(f"unknown score kind {score!r}")


def union_interval_check(intervals) -> PredictiveInterval:
    """Envelope [min lower, max upper] of fixed-sensitivity-model intervals.

    Test-side realization of the union construction; the worst-case
    interval must contain this envelope for sampled fixed models.
    """
    intervals = list(intervals)
    if not intervals:
        raise ValueError("need at least one interval")
    lower_unbounded = any(c.lower_unbounded for c in intervals)
    upper_unbounded = any(c.upper_unbounded for c in intervals)
    lower = None if lower_unbounded else min(c.lower for c in intervals)
    upper = None if upper_unbounded else max(c.upper for c in intervals)
    threshold = max(c.threshold for c in intervals)
    return PredictiveInterval(lower, upper, threshold,
                              lower_unbounded, upper_unbounded)
