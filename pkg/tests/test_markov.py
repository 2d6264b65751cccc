"""Hamilton filter, Kim smoother, EM estimator, ordering and classification."""

import math

import numpy as np
import pytest

from herdstat.design import build_design_static
from herdstat.errors import DesignError, EstimationError
from herdstat.markov import (
    MarkovSwitchingRegression,
    classify_regimes,
    fit_markov_design,
    hamilton_filter,
    kim_smoother,
    order_regimes,
    select_regime_count,
    stationary_distribution,
)
from herdstat.regression import NeweyWestOLS
from herdstat.simulate import (
    brute_force_loglik,
    brute_force_posteriors,
    simulate_dispersion_table,
    simulate_ms_data,
)

TWO_REGIME_P = np.array([[0.9, 0.1], [0.2, 0.8]])


def random_fixture(rng, S, T, p=2):
    X = np.column_stack([np.ones(T), rng.normal(size=(T, p - 1))])
    y = rng.normal(size=T)
    coef = rng.normal(size=(S, p))
    sigmas = rng.uniform(0.4, 1.8, size=S)
    P = rng.uniform(0.2, 1.0, size=(S, S))
    P /= P.sum(axis=1, keepdims=True)
    return X, y, coef, sigmas, P


class TestStationary:
    def test_matches_eigenvector(self):
        pi = stationary_distribution(TWO_REGIME_P)
        np.testing.assert_allclose(pi @ TWO_REGIME_P, pi, atol=1e-12)
        np.testing.assert_allclose(pi, [2 / 3, 1 / 3], atol=1e-12)

    def test_identity_transition(self):
        pi = stationary_distribution(np.eye(3))
        assert pi.sum() == pytest.approx(1.0)


class TestHamiltonFilter:
    def test_single_regime_equals_gaussian_loglik(self):
        rng = np.random.default_rng(0)
        T = 40
        X = np.column_stack([np.ones(T), rng.normal(size=T)])
        beta = np.array([0.5, -1.2])
        sigma = 0.7
        y = X @ beta + sigma * rng.normal(size=T)
        ll, filtered, predicted = hamilton_filter(X, y, beta[None, :], [sigma], [[1.0]])
        resid = y - X @ beta
        expected = np.sum(-0.5 * (np.log(2 * math.pi * sigma ** 2) + resid ** 2 / sigma ** 2))
        assert ll == pytest.approx(expected, abs=1e-10)
        np.testing.assert_allclose(filtered, 1.0)
        np.testing.assert_allclose(predicted, 1.0)

    def test_absorbing_chain_reduces_to_one_regime(self):
        rng = np.random.default_rng(1)
        X, y, coef, sigmas, _ = random_fixture(rng, 2, 20)
        ll, _, _ = hamilton_filter(X, y, coef, sigmas, np.eye(2),
                                   initial_probs=[1.0, 0.0])
        single, _, _ = hamilton_filter(X, y, coef[:1], sigmas[:1], [[1.0]])
        assert ll == pytest.approx(single, abs=1e-10)

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            S = int(rng.integers(2, 4))
            T = int(rng.integers(5, 9))
            X, y, coef, sigmas, P = random_fixture(rng, S, T)
            ll, _, _ = hamilton_filter(X, y, coef, sigmas, P)
            assert ll == pytest.approx(brute_force_loglik(X, y, coef, sigmas, P),
                                       abs=1e-10)

    def test_filtered_rows_on_simplex(self):
        rng = np.random.default_rng(3)
        X, y, coef, sigmas, P = random_fixture(rng, 3, 50)
        _, filtered, predicted = hamilton_filter(X, y, coef, sigmas, P)
        np.testing.assert_allclose(filtered.sum(axis=1), 1.0, atol=1e-8)
        np.testing.assert_allclose(predicted.sum(axis=1), 1.0, atol=1e-8)
        assert (filtered >= 0).all() and (predicted >= 0).all()

    def test_non_stochastic_transition_rejected(self):
        rng = np.random.default_rng(4)
        X, y, coef, sigmas, _ = random_fixture(rng, 2, 10)
        with pytest.raises(ValueError, match="sum to 1"):
            hamilton_filter(X, y, coef, sigmas, [[0.9, 0.2], [0.2, 0.8]])

    def test_nonpositive_sigma_rejected(self):
        rng = np.random.default_rng(5)
        X, y, coef, _, P = random_fixture(rng, 2, 10)
        with pytest.raises(ValueError, match="positive"):
            hamilton_filter(X, y, coef, [0.5, 0.0], P)

    def test_total_underflow_cites_observation(self):
        X = np.column_stack([np.ones(4), np.zeros(4) + 1.0])
        y = np.array([0.0, 0.0, 1e200, 0.0])
        coef = np.zeros((2, 2))
        with pytest.raises(EstimationError, match="observation 2"):
            hamilton_filter(X, y, coef, [1e-130, 1e-140], TWO_REGIME_P)


class TestKimSmoother:
    def test_single_regime_all_ones(self):
        rng = np.random.default_rng(6)
        T = 15
        X = np.column_stack([np.ones(T)])
        y = rng.normal(size=T)
        _, filtered, predicted = hamilton_filter(X, y, [[0.0]], [1.0], [[1.0]])
        smoothed = kim_smoother(filtered, predicted, [[1.0]])
        np.testing.assert_allclose(smoothed, 1.0)

    def test_last_row_equals_filtered(self):
        rng = np.random.default_rng(7)
        X, y, coef, sigmas, P = random_fixture(rng, 2, 30)
        _, filtered, predicted = hamilton_filter(X, y, coef, sigmas, P)
        smoothed = kim_smoother(filtered, predicted, P)
        np.testing.assert_allclose(smoothed[-1], filtered[-1], atol=1e-14)

    def test_matches_enumeration_posteriors(self):
        rng = np.random.default_rng(8)
        for _ in range(15):
            S = int(rng.integers(2, 4))
            T = int(rng.integers(4, 7))
            X, y, coef, sigmas, P = random_fixture(rng, S, T)
            _, filtered, predicted = hamilton_filter(X, y, coef, sigmas, P)
            smoothed = kim_smoother(filtered, predicted, P)
            exact = brute_force_posteriors(X, y, coef, sigmas, P)
            np.testing.assert_allclose(smoothed, exact, atol=1e-10)

    def test_rows_on_simplex(self):
        rng = np.random.default_rng(9)
        X, y, coef, sigmas, P = random_fixture(rng, 3, 80)
        _, filtered, predicted = hamilton_filter(X, y, coef, sigmas, P)
        smoothed = kim_smoother(filtered, predicted, P)
        np.testing.assert_allclose(smoothed.sum(axis=1), 1.0, atol=1e-8)


def two_regime_data(T=400, seed=0):
    coef = np.array([[0.02, 1.5, -8.0], [0.02, -0.3, 1.5]])
    sigmas = np.array([0.005, 0.015])
    P = np.array([[0.95, 0.05], [0.08, 0.92]])
    return simulate_ms_data(coef, sigmas, P, T=T, seed=seed), coef, sigmas, P


class TestEMFit:
    def test_single_regime_equals_ols(self):
        rng = np.random.default_rng(10)
        T = 120
        X = np.column_stack([np.ones(T), rng.normal(size=(T, 2))])
        y = X @ np.array([0.5, 1.0, -2.0]) + 0.4 * rng.normal(size=T)
        ms = MarkovSwitchingRegression(n_regimes=1, n_restarts=1, seed=0,
                                       compute_se=False).fit(X, y)
        ols = NeweyWestOLS().fit(X, y)
        np.testing.assert_allclose(ms.coef_[0], ols.coef_, atol=1e-8)
        assert ms.converged_

    def test_loglik_path_monotone(self):
        (design, _), *_ = two_regime_data(T=300, seed=3)
        est = MarkovSwitchingRegression(n_regimes=2, n_restarts=4, seed=1,
                                        compute_se=False).fit(design.X, design.y)
        path = np.asarray(est.loglik_path_)
        assert len(path) >= 2
        assert (np.diff(path) >= -1e-9).all()

    def test_seed_reproducibility_bit_identical(self):
        (design, _), *_ = two_regime_data(T=250, seed=4)
        a = MarkovSwitchingRegression(n_regimes=2, n_restarts=3, seed=11,
                                      compute_se=False).fit(design.X, design.y)
        b = MarkovSwitchingRegression(n_regimes=2, n_restarts=3, seed=11,
                                      compute_se=False).fit(design.X, design.y)
        assert np.array_equal(a.coef_, b.coef_)
        assert np.array_equal(a.sigmas_, b.sigmas_)
        assert np.array_equal(a.transition_, b.transition_)
        assert a.loglik_ == b.loglik_

    def test_probability_invariants(self):
        (design, _), *_ = two_regime_data(T=300, seed=5)
        est = MarkovSwitchingRegression(n_regimes=2, n_restarts=2, seed=2,
                                        compute_se=False).fit(design.X, design.y)
        for probs in (est.filtered_probs_, est.smoothed_probs_):
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-8)
        np.testing.assert_allclose(est.transition_.sum(axis=1), 1.0, atol=1e-10)
        assert (est.sigmas_ > 0).all()

    def test_aic_parameter_count(self):
        (design, _), *_ = two_regime_data(T=300, seed=6)
        est = MarkovSwitchingRegression(n_regimes=2, n_restarts=2, seed=0,
                                        compute_se=False).fit(design.X, design.y)
        p = design.n_params
        # pooled intercept + 2 switching sets of (p-1) + 2 sigmas + 2 free transitions
        expected = 1 + 2 * (p - 1) + 2 + 2
        assert est.n_parameters_ == expected
        assert est.aic_ == pytest.approx(2 * expected - 2 * est.loglik_)

    def test_too_few_observations(self):
        X = np.column_stack([np.ones(5), np.arange(5.0)])
        with pytest.raises(DesignError, match="observations"):
            MarkovSwitchingRegression(n_regimes=3).fit(X, np.ones(5))

    def test_regime_cap(self):
        X = np.column_stack([np.ones(100), np.arange(100.0)])
        with pytest.raises(ValueError, match="n_regimes"):
            MarkovSwitchingRegression(n_regimes=7).fit(X, np.ones(100))

    def test_switching_intercept_variant(self):
        (design, truth), *_ = two_regime_data(T=400, seed=7)
        est = MarkovSwitchingRegression(n_regimes=2, switching_intercept=True,
                                        n_restarts=2, seed=0, compute_se=False)
        est.fit(design.X, design.y)
        # With a switching intercept nothing is pooled: column 0 may differ.
        assert est.n_parameters_ == 2 * design.n_params + 2 + 2

    def test_pooled_intercept_identical_across_regimes(self):
        (design, _), *_ = two_regime_data(T=400, seed=8)
        est = MarkovSwitchingRegression(n_regimes=2, n_restarts=2, seed=0,
                                        compute_se=False).fit(design.X, design.y)
        assert est.coef_[0, 0] == est.coef_[1, 0]

    def test_predict_shape(self):
        (design, _), *_ = two_regime_data(T=300, seed=9)
        est = MarkovSwitchingRegression(n_regimes=2, n_restarts=2, seed=0,
                                        compute_se=False).fit(design.X, design.y)
        assert est.predict(design.X).shape == (design.nobs,)


class TestOrdering:
    def fitted(self, seed=12):
        (design, _), *_ = two_regime_data(T=500, seed=seed)
        est = MarkovSwitchingRegression(n_regimes=2, n_restarts=3, seed=0,
                                        compute_se=False).fit(design.X, design.y)
        return est, design

    def test_orders_ascending_and_idempotent(self):
        est, design = self.fitted()
        order_regimes(est, 2)
        assert est.coef_[0, 2] <= est.coef_[1, 2]
        before = est.coef_.copy()
        order_regimes(est, 2)
        np.testing.assert_array_equal(est.coef_, before)

    def test_permutation_consistency_and_loglik_invariance(self):
        est, design = self.fitted(seed=13)
        ll_before = est.loglik_
        order_regimes(est, 2)
        coef_canonical = est.coef_.copy()
        trans_canonical = est.transition_.copy()
        sig_canonical = est.sigmas_.copy()
        # Force the reverse order, then check order_regimes restores the
        # canonical state with every matrix conjugated consistently.
        perm = np.arange(est.n_regimes)[::-1]
        est.coef_ = est.coef_[perm]
        est.sigmas_ = est.sigmas_[perm]
        est.transition_ = est.transition_[np.ix_(perm, perm)]
        est.initial_probs_ = est.initial_probs_[perm]
        est.filtered_probs_ = est.filtered_probs_[:, perm]
        est.predicted_probs_ = est.predicted_probs_[:, perm]
        est.smoothed_probs_ = est.smoothed_probs_[:, perm]
        order_regimes(est, 2)
        np.testing.assert_allclose(est.coef_, coef_canonical, atol=1e-14)
        np.testing.assert_allclose(est.transition_, trans_canonical, atol=1e-14)
        np.testing.assert_allclose(est.sigmas_, sig_canonical, atol=1e-14)
        ll_after, _, _ = hamilton_filter(design.X, design.y, est.coef_, est.sigmas_,
                                         est.transition_)
        assert ll_after == pytest.approx(ll_before, abs=1e-9)

    def test_fit_markov_design_orders_by_squared_return(self):
        coef = np.array([[0.02, -0.3, 1.5], [0.02, 1.5, -8.0]])  # reversed order
        sigmas = np.array([0.015, 0.005])
        P = np.array([[0.92, 0.08], [0.05, 0.95]])
        frame, _ = simulate_dispersion_table(coef, sigmas, P, T=500, seed=21)
        design = build_design_static(frame, lag_count=0)
        est = fit_markov_design(design, 2, n_restarts=3, seed=0, compute_se=False)
        assert est.coef_[0, 2] < est.coef_[1, 2]


def make_classified(coef_sq, t_stats, names=("const", "abs_rm", "rm_sq")):
    """Minimal hand-built fit carrying given rm^2 coefficients and t-stats."""
    S = len(coef_sq)
    est = MarkovSwitchingRegression(n_regimes=S)
    est.coef_ = np.zeros((S, len(names)))
    est.se_ = np.full((S, len(names)), np.nan)
    j = list(names).index("rm_sq") if "rm_sq" in names else None
    for s, (c, t) in enumerate(zip(coef_sq, t_stats)):
        est.coef_[s, j] = c
        est.se_[s, j] = abs(c / t) if t else np.inf
    return est


class TestClassification:
    def test_significant_negative_is_herding(self):
        est = make_classified([-9.979], [-2.479])
        verdict = classify_regimes(est, ("const", "abs_rm", "rm_sq"), alpha=0.05)[0]
        assert verdict.label == "herding"
        assert verdict.direction == "all"

    def test_significant_positive_is_adverse(self):
        est = make_classified([1.645], [8.989])
        verdict = classify_regimes(est, ("const", "abs_rm", "rm_sq"), alpha=0.05)[0]
        assert verdict.label == "adverse_herding"

    def test_insignificant_is_neutral(self):
        est = make_classified([-0.5], [-1.0])
        verdict = classify_regimes(est, ("const", "abs_rm", "rm_sq"), alpha=0.05)[0]
        assert verdict.label == "neutral"

    def test_alpha_changes_cut(self):
        est = make_classified([-1.0], [-1.8])  # p about 0.072
        assert classify_regimes(est, ("const", "abs_rm", "rm_sq"), 0.05)[0].label == "neutral"
        assert classify_regimes(est, ("const", "abs_rm", "rm_sq"), 0.10)[0].label == "herding"

    def test_asymmetric_gives_down_and_up_verdicts(self):
        names = ("const", "down_abs_rm", "up_abs_rm", "down_rm_sq", "up_rm_sq")
        est = MarkovSwitchingRegression(n_regimes=1)
        est.coef_ = np.array([[0.0, 0.0, 0.0, 1.56, -1.169]])
        est.se_ = np.array([[np.nan, np.nan, np.nan, 1.56 / 1.609, 1.169 / 4.266]])
        verdicts = classify_regimes(est, names, alpha=0.05)
        assert [v.direction for v in verdicts] == ["down", "up"]
        assert verdicts[0].label == "neutral"       # t = 1.609
        assert verdicts[1].label == "herding"       # t = -4.266

    def test_requires_standard_errors(self):
        est = make_classified([-1.0], [-3.0])
        est.se_ = None
        with pytest.raises(EstimationError, match="standard errors"):
            classify_regimes(est, ("const", "abs_rm", "rm_sq"))


class TestSelection:
    def test_single_candidate(self):
        (design, _), *_ = two_regime_data(T=250, seed=14)
        best, table = select_regime_count(design, {1}, n_restarts=1, seed=0,
                                          compute_se=False)
        assert best.n_regimes == 1
        assert len(table) == 1 and table[0]["n_regimes"] == 1

    def test_prefers_true_regime_count(self):
        (design, truth), *_ = two_regime_data(T=700, seed=15)
        best, table = select_regime_count(design, {1, 2}, n_restarts=2, seed=0,
                                          compute_se=False)
        assert best.n_regimes == 2
        aic = {row["n_regimes"]: row["aic"] for row in table}
        assert aic[2] < aic[1]

    def test_failed_candidate_excluded_with_warning(self):
        (design, _), *_ = two_regime_data(T=40, seed=16)
        with pytest.warns(UserWarning, match="excluded"):
            best, table = select_regime_count(design, {1, 6}, n_restarts=1, seed=0,
                                              compute_se=False)
        assert best.n_regimes == 1
        assert "error" in table[-1]

    def test_empty_candidates(self):
        (design, _), *_ = two_regime_data(T=100, seed=17)
        with pytest.raises(ValueError):
            select_regime_count(design, set())

    def test_se_computed_on_winner(self):
        (design, _), *_ = two_regime_data(T=300, seed=18)
        best, _ = select_regime_count(design, {2}, n_restarts=2, seed=0)
        assert best.se_ is not None and best.se_.shape == best.coef_.shape


class TestStandardErrors:
    def test_se_reasonable_for_single_regime(self):
        rng = np.random.default_rng(30)
        T = 400
        X = np.column_stack([np.ones(T), rng.normal(size=T)])
        y = X @ np.array([1.0, 2.0]) + 0.5 * rng.normal(size=T)
        est = MarkovSwitchingRegression(n_regimes=1, n_restarts=1, seed=0).fit(X, y)
        sigma2 = np.mean((y - X @ est.coef_[0]) ** 2)
        classical = np.sqrt(np.diag(sigma2 * np.linalg.inv(X.T @ X)))
        np.testing.assert_allclose(est.se_[0], classical, rtol=0.15)

    def test_pooled_column_shares_se(self):
        (design, _), *_ = two_regime_data(T=400, seed=19)
        est = MarkovSwitchingRegression(n_regimes=2, n_restarts=2, seed=0)
        est.fit(design.X, design.y)
        assert est.se_[0, 0] == est.se_[1, 0]
        assert np.isfinite(est.se_[:, 1:]).all()
        assert (est.sigma_se_ > 0).all()
