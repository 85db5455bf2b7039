import warnings

import numpy as np
import pytest

from confsens.cssa import (
    BalanceConstraint,
    FractionalProgram,
    _max_linear_box_interval,
    _probe_single_constraint,
    _probe_with_target_mass,
    balance_rhs,
    cssa_interval,
    cssa_threshold,
    cssa_threshold_batch,
    solve_fractional,
)
from confsens.csa import csa_interval, greedy_max_quantile
from confsens.msm import SensitivitySpec, min_miscoverage, weight_bounds_same_arm
from confsens.predictors import fit_mean, fit_propensity


def grid_oracle_fractional(tail_index, lo, hi, resolution=1e-3):
    """Brute-force reference for the unconstrained fractional program:
    scan each weight over a grid of its box.  Exponential, tiny n only."""
    n = lo.shape[0]
    grids = [np.arange(lo[i], hi[i] + resolution / 2, resolution)
             for i in range(n)]
    best = -np.inf
    mesh = np.meshgrid(*grids, indexing="ij")
    w = np.stack([m.ravel() for m in mesh], axis=1)
    vals = w[:, tail_index:].sum(axis=1) / w.sum(axis=1)
    return float(vals.max())


class TestBalanceRhs:
    def test_hand_value(self):
        # units: (t=1, e=0.5, g=2) and (t=0, e=0.5, g=7)
        got = balance_rhs(np.array([1, 0]), np.array([0.5, 0.5]),
                          np.array([2.0, 7.0]), t=1)
        assert got == pytest.approx(2.0)  # (2/0.5 + 0) / 2

    def test_control_arm(self):
        got = balance_rhs(np.array([1, 0]), np.array([0.5, 0.75]),
                          np.array([2.0, 1.0]), t=0)
        assert got == pytest.approx(2.0)  # (0 + 1/0.25) / 2


class TestSolveFractional:
    def test_whole_range_tail_is_one(self):
        fp = FractionalProgram(tail_index=0, lo=np.array([0.5, 0.5]),
                               hi=np.array([1.0, 2.0]))
        res = solve_fractional(fp)
        assert res.feasible and res.value == pytest.approx(1.0)

    def test_top_atom_matches_min_miscoverage(self):
        # unconstrained max of the normalized sentinel mass equals the
        # minimum achievable miscoverage of the sensitivity model
        e_cal = np.array([0.3, 0.4, 0.45])
        e_t, gamma, p_t = 0.35, 2.0, 0.4
        lo_c, hi_c = weight_bounds_same_arm(e_cal, gamma, 1, p_t)
        lo_t, hi_t = weight_bounds_same_arm(np.array([e_t]), gamma, 1, p_t)
        fp = FractionalProgram(tail_index=3,
                               lo=np.append(lo_c, lo_t),
                               hi=np.append(hi_c, hi_t))
        res = solve_fractional(fp)
        want = min_miscoverage(e_cal, e_t, gamma, 1, p_t)
        assert res.value == pytest.approx(want)

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = 3
            lo = np.round(rng.uniform(0.1, 0.5, size=n), 2)
            hi = lo + np.round(rng.uniform(0.05, 0.3, size=n), 2)
            tail = int(rng.integers(0, n))
            res = solve_fractional(FractionalProgram(tail, lo, hi))
            want = grid_oracle_fractional(tail, lo, hi)
            assert res.value == pytest.approx(want, abs=2e-3)

    def test_weights_respect_box_and_constraint(self):
        lo = np.array([0.2, 0.2, 0.2])
        hi = np.array([1.0, 1.0, 1.0])
        A = np.array([[1.0, 1.0, 0.0]])
        b = np.array([1.0])
        res = solve_fractional(FractionalProgram(2, lo, hi, A_eq=A, b_eq=b))
        assert res.feasible
        w = res.weights
        assert np.all(w >= lo - 1e-9) and np.all(w <= hi + 1e-9)
        assert w[0] + w[1] == pytest.approx(1.0, abs=1e-5)

    def test_constraint_can_only_shrink_value(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = 5
            lo = rng.uniform(0.1, 0.5, size=n)
            hi = lo + rng.uniform(0.05, 0.5, size=n)
            tail = int(rng.integers(0, n))
            a = rng.uniform(0.5, 1.5, size=n)
            mid = a @ ((lo + hi) / 2)
            free = solve_fractional(FractionalProgram(tail, lo, hi))
            tied = solve_fractional(FractionalProgram(
                tail, lo, hi, A_eq=a.reshape(1, -1), b_eq=np.array([mid])))
            assert tied.feasible
            assert tied.value <= free.value + 1e-9

    def test_infeasible_constraint(self):
        lo = np.array([0.2, 0.2])
        hi = np.array([0.4, 0.4])
        res = solve_fractional(FractionalProgram(
            0, lo, hi, A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([5.0])))
        assert not res.feasible


class TestBreakpointWalk:
    def test_matches_lp_randomized(self):
        rng = np.random.default_rng(2)
        from confsens.lp import solve_lp
        for _ in range(200):
            n = int(rng.integers(2, 8))
            lo = rng.uniform(0.1, 0.5, size=n)
            hi = lo + rng.uniform(0.0, 0.5, size=n)
            a = rng.uniform(0.2, 2.0, size=n)
            r = rng.normal(size=n)
            lower = float(a @ lo) + rng.uniform(0, 1) * float(a @ (hi - lo))
            width = rng.uniform(0.0, 0.2)
            feasible, w = _max_linear_box_interval(r, a, lo, hi,
                                                   lower - width,
                                                   lower + width)
            # LP in shifted variables y = w - lo >= 0
            res = solve_lp(
                r, A_ub=np.vstack([np.eye(n), a, -a]),
                b_ub=np.concatenate([hi - lo,
                                     [lower + width - a @ lo],
                                     [-(lower - width - a @ lo)]]),
                maximize=True)
            assert feasible == res.optimal
            if feasible:
                assert r @ w == pytest.approx(res.value + r @ lo, abs=1e-8)

    def test_infeasible_interval(self):
        lo = np.array([0.1, 0.1])
        hi = np.array([0.2, 0.2])
        ok, _ = _max_linear_box_interval(np.array([1.0, -1.0]),
                                         np.array([1.0, 1.0]),
                                         lo, hi, 10.0, 11.0)
        assert not ok

    def test_single_constraint_probe_matches_lp_probe(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(3, 10))
            lo = rng.uniform(0.1, 0.5, size=n)
            hi = lo + rng.uniform(0.05, 0.5, size=n)
            a = rng.uniform(0.2, 2.0, size=n)
            b = float(a @ ((lo + hi) / 2))
            h = rng.uniform(0.2, 1.0)
            j = int(rng.integers(1, n + 2))
            ok1, v1 = _probe_single_constraint(j, h, lo, hi, a, b, 1e-6)
            ok2, v2 = _probe_with_target_mass(j, h, lo, hi,
                                              a.reshape(1, -1),
                                              np.array([b]), 0.2, 1e-6, 1e-8)
            assert ok1 == ok2
            if ok1:
                assert v1 == pytest.approx(v2, abs=1e-7)


class TestThreshold:
    def _instance(self, seed=0, n=20):
        rng = np.random.default_rng(seed)
        scores = np.sort(rng.normal(size=n))
        e = rng.uniform(0.25, 0.5, size=n)
        lo_c, hi_c = weight_bounds_same_arm(e, 2.0, 1, 0.4)
        lo_t, hi_t = weight_bounds_same_arm(np.array([0.35]), 2.0, 1, 0.4)
        v = np.append(scores, np.inf)
        lo = np.append(lo_c, lo_t)
        hi = np.append(hi_c, hi_t)
        g = rng.uniform(0.25, 0.5, size=n)
        return v, lo, hi, g, e

    def test_no_constraints_is_greedy(self):
        v, lo, hi, _, _ = self._instance()
        got = cssa_threshold(v, lo, hi, [], 0.2)
        assert got == greedy_max_quantile(v, lo, hi, 0.2).threshold

    def test_never_exceeds_greedy(self):
        for seed in range(5):
            v, lo, hi, g, _ = self._instance(seed=seed)
            mid = float(g @ ((lo[:-1] + hi[:-1]) / 2))
            con = BalanceConstraint(coefficients=g, rhs=mid)
            got = cssa_threshold(v, lo, hi, [con], 0.2)
            assert got <= greedy_max_quantile(v, lo, hi, 0.2).threshold

    def test_loose_constraint_recovers_greedy(self):
        v, lo, hi, g, _ = self._instance(seed=7)
        # a constraint satisfied across the whole box changes nothing
        con = BalanceConstraint(coefficients=g,
                                rhs=float(g @ ((lo[:-1] + hi[:-1]) / 2)),
                                label="loose")
        wide = BalanceConstraint(coefficients=np.zeros_like(g), rhs=0.0)
        got = cssa_threshold(v, lo, hi, [wide], 0.2)
        assert got == greedy_max_quantile(v, lo, hi, 0.2).threshold

    def test_infeasible_falls_back_with_warning(self):
        v, lo, hi, g, _ = self._instance(seed=8)
        con = BalanceConstraint(coefficients=g, rhs=1e6)
        with pytest.warns(UserWarning, match="infeasible"):
            got = cssa_threshold(v, lo, hi, [con], 0.2)
        assert got == greedy_max_quantile(v, lo, hi, 0.2).threshold

    def test_misaligned_constraint_error(self):
        v, lo, hi, g, _ = self._instance()
        con = BalanceConstraint(coefficients=g[:-2], rhs=1.0)
        with pytest.raises(ValueError):
            cssa_threshold(v, lo, hi, [con], 0.2)


class TestThresholdBatch:
    def test_matches_scalar(self):
        rng = np.random.default_rng(4)
        n = 25
        scores = rng.normal(size=n)
        e = rng.uniform(0.25, 0.5, size=n)
        lo_c, hi_c = weight_bounds_same_arm(e, 2.0, 1, 0.4)
        g = rng.uniform(0.25, 0.5, size=n)
        mid = float(g @ ((lo_c + hi_c) / 2))
        con = BalanceConstraint(coefficients=g, rhs=mid)
        e_t = rng.uniform(0.25, 0.5, size=8)
        _, hi_t = weight_bounds_same_arm(e_t, 2.0, 1, 0.4)
        batch = cssa_threshold_batch(scores, lo_c, hi_c, [con], 0.2, hi_t)
        order = np.argsort(scores, kind="stable")
        v = np.append(scores[order], np.inf)
        for jt, et in enumerate(e_t):
            lo_s, hi_s = weight_bounds_same_arm(np.array([et]), 2.0, 1, 0.4)
            single = cssa_threshold(v,
                                    np.append(lo_c[order], lo_s),
                                    np.append(hi_c[order], hi_s),
                                    [BalanceConstraint(
                                        coefficients=g[order], rhs=mid)],
                                    0.2)
            assert batch[jt] == pytest.approx(single, abs=0)

    def test_empty_constraints_delegates_to_greedy(self):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=15)
        lo_c = rng.uniform(0.3, 0.6, size=15)
        hi_c = lo_c + 0.5
        h = rng.uniform(0.3, 1.0, size=4)
        got = cssa_threshold_batch(scores, lo_c, hi_c, [], 0.2, h)
        order = np.argsort(scores)
        from confsens.csa import greedy_threshold_batch
        want = greedy_threshold_batch(scores[order], lo_c[order],
                                      hi_c[order], h, 0.2)
        assert np.array_equal(got, want)

    def test_infeasible_warns_and_falls_back(self):
        rng = np.random.default_rng(6)
        scores = rng.normal(size=10)
        lo_c = rng.uniform(0.3, 0.6, size=10)
        hi_c = lo_c + 0.2
        con = BalanceConstraint(coefficients=np.ones(10), rhs=1e6)
        with pytest.warns(UserWarning, match="infeasible"):
            got = cssa_threshold_batch(scores, lo_c, hi_c, [con], 0.2,
                                       np.array([0.5, 0.8]))
        order = np.argsort(scores)
        from confsens.csa import greedy_threshold_batch
        want = greedy_threshold_batch(scores[order], lo_c[order],
                                      hi_c[order], np.array([0.5, 0.8]), 0.2)
        assert np.array_equal(got, want)


def _arm_instance(seed=0, n=300):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, 3))
    e = 0.25 + 0.25 * x[:, 0]
    t = (rng.uniform(size=n) < e).astype(int)
    y = x[:, 0] + rng.normal(size=n)
    return x, t, y


class TestInterval:
    def test_no_wider_than_unconstrained(self):
        x, t, y = _arm_instance()
        idx1 = np.flatnonzero(t == 1)
        fit_n = len(idx1) // 2
        mu = fit_mean(x[idx1[:fit_n]], y[idx1[:fit_n]])
        prop = fit_propensity(x, t)
        cal_x, cal_y = x[idx1[fit_n:]], y[idx1[fit_n:]]
        p_t = t.mean()
        x0 = np.array([0.5, 0.5, 0.5])
        for gamma in (1.5, 2.0, 3.0):
            spec = SensitivitySpec(gamma=gamma, alpha=0.2, t=1)
            plain = csa_interval(mu, prop, cal_x, cal_y, x0, spec, p_t)
            with warnings.catch_warnings():
                warnings.simplefilter("error")  # no silent fallback
                sharp = cssa_interval(mu, prop, cal_x, cal_y, x0, spec,
                                      p_t, x, t)
            assert sharp.width <= plain.width + 1e-9

    def test_unknown_g_kind(self):
        x, t, y = _arm_instance(seed=1)
        idx1 = np.flatnonzero(t == 1)
        mu = fit_mean(x[idx1[:50]], y[idx1[:50]])
        prop = fit_propensity(x, t)
        spec = SensitivitySpec(gamma=2.0, alpha=0.2, t=1)
        with pytest.raises(ValueError, match="balancing"):
            cssa_interval(mu, prop, x[idx1[50:]], y[idx1[50:]],
                          x[0], spec, 0.35, x, t, g_kind="nope")
