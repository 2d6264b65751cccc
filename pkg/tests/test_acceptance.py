"""Acceptance suite: one test per criterion, each printing a PASS line.

Runtime-bounded criteria assert their own wall-clock budgets. Criterion 7
needs a user-supplied historical panel (HERDSTAT_REPRO_PANEL) and is
skipped when none is provided.
"""

import json
import os
import time

import numpy as np
import pandas as pd
import pytest

import herdstat as hs
from herdstat.cli import main as cli_main
from herdstat.design import build_design_asymmetric, build_design_static
from herdstat.dispersion import csad_series, cssd_series
from herdstat.panel import compute_returns, market_return, parse_panel
from herdstat.regression import NeweyWestOLS, newey_west_cov, normal_two_sided_pvalue, ols_fit
from tests.conftest import random_return_panel
from tests.test_cli import write_panel_csv
from tests.test_dispersion import oracle_dispersion
from tests.test_regression import oracle_newey_west

TRUE_COEF = np.array([
    [0.025, 1.955, -10.0],
    [0.025, 0.581, -0.9],
    [0.025, -0.385, 1.6],
])
TRUE_SIGMAS = np.array([0.004, 0.010, 0.022])
TRUE_P = np.array([
    [0.92, 0.05, 0.03],
    [0.04, 0.92, 0.04],
    [0.03, 0.05, 0.92],
])


def test_criterion_1_oracle_equivalence():
    """Filter and smoother match exhaustive path enumeration to 1e-10."""
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst_ll = 0.0
    worst_sm = 0.0
    for _ in range(200):
        S = int(rng.integers(2, 4))
        T = int(rng.integers(5, 10))
        X = np.column_stack([np.ones(T), rng.normal(size=T)])
        y = rng.normal(size=T)
        coef = rng.normal(size=(S, 2))
        sigmas = rng.uniform(0.3, 2.0, size=S)
        P = rng.uniform(0.1, 1.0, size=(S, S))
        P /= P.sum(axis=1, keepdims=True)
        ll, filtered, predicted = hs.hamilton_filter(X, y, coef, sigmas, P)
        bf = hs.brute_force_loglik(X, y, coef, sigmas, P)
        worst_ll = max(worst_ll, abs(ll - bf))
        smoothed = hs.kim_smoother(filtered, predicted, P)
        exact = hs.brute_force_posteriors(X, y, coef, sigmas, P)
        worst_sm = max(worst_sm, float(np.max(np.abs(smoothed - exact))))
    elapsed = time.perf_counter() - start
    assert worst_ll < 1e-10
    assert worst_sm < 1e-10
    assert elapsed < 10.0
    print(f"criterion 1 PASS: max |loglik err| {worst_ll:.2e}, "
          f"max |posterior err| {worst_sm:.2e}, {elapsed:.1f}s over 200 fixtures")


def test_criterion_2_dispersion_correctness():
    """CSAD/CSSD match direct summation to 1e-12 on 1000 random panels."""
    rng = np.random.default_rng(20240202)
    worst = 0.0
    for i in range(1000):
        n_assets = int(rng.integers(2, 7))
        n_dates = int(rng.integers(5, 21))
        aggregator = "median" if i % 2 == 0 else "mean"
        returns = random_return_panel(rng, n_assets, n_dates)
        market = market_return(returns, aggregator)
        csad = csad_series(returns, market).to_numpy()
        cssd = cssd_series(returns, market).to_numpy()
        oracle_csad, oracle_cssd = oracle_dispersion(returns, market)
        worst = max(worst,
                    float(np.max(np.abs(csad - oracle_csad.to_numpy()))),
                    float(np.max(np.abs(cssd - oracle_cssd.to_numpy()))))
        assert (cssd >= csad - 1e-15).all()
        # Positive homogeneity: doubling returns doubles CSAD.
        doubled = csad_series(returns * 2, market_return(returns * 2, aggregator))
        assert np.max(np.abs(doubled.to_numpy() - 2 * csad)) < 1e-12
    assert worst < 1e-12
    print(f"criterion 2 PASS: max oracle deviation {worst:.2e} over 1000 panels")


def test_criterion_3_hac_correctness():
    """White equality, hand fixture, and 5% +/- 1% Monte-Carlo size."""
    start = time.perf_counter()
    # Bandwidth 0 collapses to the White estimator.
    rng = np.random.default_rng(20240303)
    X = np.column_stack([np.ones(80), rng.normal(size=(80, 2))])
    u = rng.normal(size=80)
    scores = X * u[:, None]
    white = np.linalg.inv(X.T @ X) @ (scores.T @ scores) @ np.linalg.inv(X.T @ X)
    assert np.max(np.abs(newey_west_cov(X, u, 0) - white)) < 1e-12

    # Three-observation fixture, worked by hand.
    X3 = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    u3 = np.array([-0.5, 1.0, -0.5])
    expected = np.array([[13.0 / 72.0, -0.125], [-0.125, 0.125]])
    assert np.max(np.abs(newey_west_cov(X3, u3, 1) - expected)) < 1e-12
    assert np.max(np.abs(newey_west_cov(X3, u3, 1) - oracle_newey_west(X3, u3, 1))) < 1e-12

    # Monte-Carlo size of the slope t-test under the null.
    rng = np.random.default_rng(20250808)
    T, replications = 1000, 10_000
    x = rng.standard_normal(T)
    Xmc = np.column_stack([np.ones(T), x])
    est = NeweyWestOLS(bandwidth="auto")
    crit = 1.959963984540054  # two-sided 5% normal critical value
    rejections = 0
    for _ in range(replications):
        y = rng.standard_normal(T)
        est.fit(Xmc, y)
        rejections += abs(est.t_stats_[1]) > crit
    rate = rejections / replications
    elapsed = time.perf_counter() - start
    assert abs(rate - 0.05) <= 0.01
    assert elapsed < 60.0
    print(f"criterion 3 PASS: MC size {rate:.4f}, {elapsed:.1f}s")


def test_criterion_4_em_behavior():
    """Monotone log-likelihood, S=1 == OLS, seed-identical refits."""
    fixtures = []
    for S, T, seed in ((2, 400, 0), (2, 250, 5), (3, 900, 1)):
        design, _ = hs.simulate_ms_data(TRUE_COEF[:S, :], TRUE_SIGMAS[:S],
                                        TRUE_P[:S, :S] / TRUE_P[:S, :S].sum(axis=1, keepdims=True),
                                        T=T, seed=seed)
        fixtures.append((design, S))
    rng = np.random.default_rng(44)
    Xg = np.column_stack([np.ones(300), rng.normal(size=(300, 2))])
    yg = Xg @ np.array([0.5, -1.0, 2.0]) + 0.3 * rng.normal(size=300)

    for design, S in fixtures:
        est = hs.MarkovSwitchingRegression(n_regimes=S, n_restarts=3, seed=7,
                                           compute_se=False).fit(design.X, design.y)
        path = np.asarray(est.loglik_path_)
        assert (np.diff(path) >= -1e-9).all(), "log-likelihood decreased"

    ms1 = hs.MarkovSwitchingRegression(n_regimes=1, n_restarts=1, seed=0,
                                       compute_se=False).fit(Xg, yg)
    ols = NeweyWestOLS().fit(Xg, yg)
    assert np.max(np.abs(ms1.coef_[0] - ols.coef_)) < 1e-8

    design, _ = fixtures[0][0], None
    a = hs.MarkovSwitchingRegression(n_regimes=2, n_restarts=3, seed=123,
                                     compute_se=False).fit(design.X, design.y)
    b = hs.MarkovSwitchingRegression(n_regimes=2, n_restarts=3, seed=123,
                                     compute_se=False).fit(design.X, design.y)
    assert np.array_equal(a.coef_, b.coef_)
    assert np.array_equal(a.sigmas_, b.sigmas_)
    assert np.array_equal(a.transition_, b.transition_)
    assert np.array_equal(a.smoothed_probs_, b.smoothed_probs_)
    print("criterion 4 PASS: monotone EM, OLS reduction, bit-identical refits")


def test_criterion_5_parameter_recovery():
    """20 seeds at T=3000: truth within 3 SE and >= 90% state accuracy."""
    start = time.perf_counter()
    successes = 0
    worst = []
    for seed in range(20):
        design, truth = hs.simulate_ms_data(TRUE_COEF, TRUE_SIGMAS, TRUE_P,
                                            T=3000, seed=seed)
        est = hs.MarkovSwitchingRegression(n_regimes=3, n_restarts=3, seed=seed,
                                           order_by=[2], compute_se=True)
        est.fit(design.X, design.y)
        within = np.abs(est.coef_ - TRUE_COEF) <= 3 * est.se_
        accuracy = float((est.smoothed_probs_.argmax(1) == truth.states).mean())
        ok = bool(within.all() and accuracy >= 0.90)
        successes += ok
        if not ok:
            worst.append((seed, accuracy, int(within.sum())))
    elapsed = time.perf_counter() - start
    assert successes >= 18, f"only {successes}/20 seeds recovered truth: {worst}"
    assert elapsed < 300.0
    print(f"criterion 5 PASS: {successes}/20 seeds, {elapsed:.1f}s")


def test_criterion_6_regime_count_selection():
    """AIC scan over {1,2,3,4} picks the generating S=3 in >= 80% of seeds."""
    picks = []
    for seed in range(20):
        design, _ = hs.simulate_ms_data(TRUE_COEF, TRUE_SIGMAS, TRUE_P,
                                        T=1500, seed=100 + seed)
        best, table = hs.select_regime_count(design, {1, 2, 3, 4}, n_restarts=2,
                                             seed=seed, tol=1e-6, compute_se=False)
        picks.append(best.n_regimes)
        aic = {row["n_regimes"]: row.get("aic") for row in table}
        assert aic[3] < aic[1], "switching model should beat the static fit"
    rate = picks.count(3) / len(picks)
    assert rate >= 0.80, f"picked 3 regimes in only {rate:.0%} of seeds ({picks})"
    print(f"criterion 6 PASS: S=3 selected in {rate:.0%} of 20 seeds")


@pytest.mark.skipif("HERDSTAT_REPRO_PANEL" not in os.environ,
                    reason="needs a user-supplied 2013-2018 top-100 panel "
                           "(set HERDSTAT_REPRO_PANEL to its long-CSV path)")
def test_criterion_7_conditional_reproduction():
    """Sign-and-significance pattern of the reference-period herding fits."""
    panel = parse_panel(os.environ["HERDSTAT_REPRO_PANEL"], format="long")
    window = panel.close.loc["2013-04-29":"2018-04-03"]
    if len(window) >= 5:
        panel = hs.PricePanel(window, panel.market_cap.loc[window.index])
    if len(panel.assets) > 100:
        panel = panel.filter_top_assets(100)
    returns = compute_returns(panel)
    market = market_return(returns, aggregator="median")
    disp = hs.dispersion_table(returns, market)

    static = ols_fit(build_design_static(disp, lag_count=3))
    by_name = dict(zip(static.column_names, zip(static.coef, static.t_stats)))
    c_abs, t_abs = by_name["abs_rm"]
    c_sq, t_sq = by_name["rm_sq"]
    assert c_abs > 0 and normal_two_sided_pvalue(t_abs) < 0.01
    assert c_sq < 0 and normal_two_sided_pvalue(t_sq) >= 0.10
    for lag in ("csad_lag1", "csad_lag2", "csad_lag3"):
        c, t = by_name[lag]
        assert c > 0 and normal_two_sided_pvalue(t) < 0.05

    asym = ols_fit(build_design_asymmetric(disp, lag_count=3))
    by_name = dict(zip(asym.column_names, zip(asym.coef, asym.t_stats)))
    c_down, t_down = by_name["down_abs_rm"]
    assert c_down < 0 and normal_two_sided_pvalue(t_down) < 0.05
    c_upsq, t_upsq = by_name["up_rm_sq"]
    assert c_upsq < 0 and normal_two_sided_pvalue(t_upsq) < 0.05
    print("criterion 7 PASS: reference-period sign/significance pattern reproduced")


def test_criterion_8_performance_envelope(tmp_path):
    """Ingest -> dispersion -> MS(3) x 10 restarts on 100x1800 in < 60 s."""
    csv = write_panel_csv(tmp_path / "big.csv", n_assets=100, n_dates=1800, seed=13)
    out = tmp_path / "run"
    start = time.perf_counter()
    assert cli_main(["ingest", "--input", str(csv), "--output-dir", str(out)]) == 0
    assert cli_main(["dispersion", "--output-dir", str(out)]) == 0
    assert cli_main(["fit", "--model", "ms", "--design", "symmetric",
                     "--n-regimes", "3", "--restarts", "10", "--seed", "0",
                     "--output-dir", str(out)]) == 0
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    payload = json.loads((out / "fit_ms_symmetric.json").read_text())
    assert payload["n_regimes"] == 3 and payload["converged"]
    assert len(payload["regimes"]) == 3
    probs = pd.read_csv(out / "smoothed_probs_symmetric.csv")
    assert len(probs) == 1800 - 1 - 3  # first return date and 3 lag rows drop
    print(f"criterion 8 PASS: full pipeline in {elapsed:.1f}s")
