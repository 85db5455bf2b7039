"""Pluggable prediction models fitted on the preliminary split.

Built-ins are deliberately dependency-free and deterministic: k-nearest
neighbor averaging for the conditional mean, k-NN empirical quantiles for
conditional quantiles, and an L2-penalized logistic regression (full-batch
gradient ascent on standardized features) for the propensity.  Any object
with the same ``predict`` surface can be substituted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KNNMean",
    "KNNQuantile",
    "LogisticPropensity",
    "relevance_weights",
    "fit_mean",
    "fit_quantile",
    "fit_propensity",
    "marginal_treatment_prob",
]


def relevance_weights(train_x, train_y, floor=1e-3):
    """Per-feature metric weights from absolute outcome correlation.

    Scaling the k-NN metric by these weights focuses neighbor search on
    covariates that carry signal, which matters when most dimensions are
    noise.  Weights are normalized to max 1 with a small floor so no
    coordinate is discarded entirely.
    """
    x = np.asarray(train_x, dtype=float)
    y = np.asarray(train_y, dtype=float)
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    sx = x.std(axis=0)
    sy = y.std()
    denom = sx * sy
    denom[denom == 0.0] = np.inf
    corr = np.abs(xc.T @ yc) / (x.shape[0] * denom)
    top = corr.max()
    if top <= 0.0 or sy == 0.0:
        return np.ones(x.shape[1])
    return np.maximum(corr / top, floor)


def _as_2d(x, p):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == p else x.reshape(-1, 1)
    if x.shape[1] != p:
        raise ValueError(f"query has {x.shape[1]} covariates, model expects {p}")
    return x


def _neighbor_idx(train_x, query_x, k):
    # stable argsort so equidistant neighbors resolve by training index
    d2 = ((query_x[:, None, :] - train_x[None, :, :]) ** 2).sum(axis=2)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def _empirical_quantile(sorted_vals, tau):
    # inf{y: F_hat(y) >= tau} over k points: order statistic ceil(tau*k)
    k = sorted_vals.shape[-1]
    j = int(np.ceil(tau * k)) - 1
    return sorted_vals[..., max(j, 0)]


class KNNMean:
    """Conditional-mean regressor by k-nearest-neighbor averaging.

    An optional per-feature weight vector rescales the metric (see
    `relevance_weights`); by default all features count equally.
    """

    def __init__(self, train_x, train_y, k, feature_weights=None):
        self.x = np.asarray(train_x, dtype=float)
        self.y = np.asarray(train_y, dtype=float)
        self.k = int(k)
        self.n_pre = self.x.shape[0]
        self.feature_weights = (None if feature_weights is None
                                else np.asarray(feature_weights, dtype=float))

    def predict(self, x):
        x = _as_2d(x, self.x.shape[1])
        train = self.x
        if self.feature_weights is not None:
            train = train * self.feature_weights
            x = x * self.feature_weights
        idx = _neighbor_idx(train, x, self.k)
        return self.y[idx].mean(axis=1)


class KNNQuantile:
    """Conditional-quantile pair from the k-NN empirical distribution.

    The two predictions are sorted before returning, which enforces
    lower <= upper regardless of the underlying estimates.
    """

    def __init__(self, train_x, train_y, levels, k, feature_weights=None):
        lo, hi = float(levels[0]), float(levels[1])
        if not (0.0 < lo < 1.0) or not (0.0 < hi < 1.0):
            raise ValueError("quantile levels must lie in (0, 1)")
        if not lo < hi:
            raise ValueError(f"levels must satisfy lo < hi, got ({lo}, {hi})")
        self.x = np.asarray(train_x, dtype=float)
        self.y = np.asarray(train_y, dtype=float)
        self.levels = (lo, hi)
        self.k = int(k)
        self.n_pre = self.x.shape[0]
        self.feature_weights = (None if feature_weights is None
                                else np.asarray(feature_weights, dtype=float))

    def predict(self, x):
        """Return (q_lo, q_hi) arrays for the query points."""
        x = _as_2d(x, self.x.shape[1])
        train = self.x
        if self.feature_weights is not None:
            train = train * self.feature_weights
            x = x * self.feature_weights
        idx = _neighbor_idx(train, x, self.k)
        neigh = np.sort(self.y[idx], axis=1)
        q_lo = _empirical_quantile(neigh, self.levels[0])
        q_hi = _empirical_quantile(neigh, self.levels[1])
        stacked = np.sort(np.stack([q_lo, q_hi]), axis=0)
        return stacked[0], stacked[1]


class LogisticPropensity:
    """Logistic-regression treatment model with clipped outputs.

    Standardization statistics are stored in the fitted model so query
    features are transformed exactly as the training features were.
    Predictions are clipped to [eta, 1 - eta].
    """

    def __init__(self, train_x, train_t, eta=0.01, penalty=1e-4,
                 step_size=0.1, n_iter=500):
        if not (0.0 < eta < 0.5):
            raise ValueError("eta must lie in (0, 0.5)")
        x = np.asarray(train_x, dtype=float)
        t = np.asarray(train_t, dtype=float)
        if len(np.unique(t)) < 2:
            raise ValueError("both treatment values must be present")
        self.eta = float(eta)
        self.mean_ = x.mean(axis=0)
        sd = x.std(axis=0)
        sd[sd == 0.0] = 1.0
        self.sd_ = sd
        z = (x - self.mean_) / self.sd_
        n, p = z.shape
        beta = np.zeros(p)
        intercept = 0.0
        for _ in range(n_iter):
            s = 1.0 / (1.0 + np.exp(-(z @ beta + intercept)))
            resid = t - s
            beta += step_size * (z.T @ resid / n - 2.0 * penalty * beta)
            intercept += step_size * resid.mean()
        self.beta_ = beta
        self.intercept_ = intercept

    def predict(self, x):
        x = _as_2d(x, self.mean_.shape[0])
        z = (x - self.mean_) / self.sd_
        e = 1.0 / (1.0 + np.exp(-(z @ self.beta_ + self.intercept_)))
        return np.clip(e, self.eta, 1.0 - self.eta)


def _default_k(n):
    return int(np.ceil(np.sqrt(n)))


def _metric_weights(scale, train_x, train_y):
    if scale is None:
        return None
    if scale == "relevance":
        return relevance_weights(train_x, train_y)
    raise ValueError(f"unknown metric scaling {scale!r}")


def fit_mean(train_x, train_y, k=None, scale=None) -> KNNMean:
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    if train_x.shape[0] == 1 and np.asarray(train_y).size > 1:
        train_x = train_x.T
    n = train_x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training pairs")
    return KNNMean(train_x, train_y, k or _default_k(n),
                   feature_weights=_metric_weights(scale, train_x, train_y))


def fit_quantile(train_x, train_y, levels, k=None, scale=None) -> KNNQuantile:
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    if train_x.shape[0] == 1 and np.asarray(train_y).size > 1:
        train_x = train_x.T
    n = train_x.shape[0]
    lo, hi = float(levels[0]), float(levels[1])
    if 0.0 < lo < hi < 1.0:
        min_n = int(np.ceil(1.0 / min(lo, 1.0 - hi)))
        if n < min_n:
            raise ValueError(f"need at least {min_n} training pairs for levels {levels}")
    return KNNQuantile(train_x, train_y, levels, k or _default_k(n),
                       feature_weights=_metric_weights(scale, train_x, train_y))


def fit_propensity(train_x, train_t, eta=0.01, penalty=1e-4, step_size=0.1,
                   n_iter=500) -> LogisticPropensity:
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    if train_x.shape[0] == 1 and np.asarray(train_t).size > 1:
        train_x = train_x.T
    return LogisticPropensity(train_x, train_t, eta=eta, penalty=penalty,
                              step_size=step_size, n_iter=n_iter)


def marginal_treatment_prob(treatment, t) -> float:
    """Empirical fraction of units in arm t; both arms must be present."""
    treatment = np.asarray(treatment)
    if treatment.size == 0:
        raise ValueError("empty dataset")
    frac = float(np.mean(treatment == t))
    if frac == 0.0 or frac == 1.0:
        raise ValueError(f"treatment arm {1 - t} is absent")
    return frac
