"""Herding diagnostics for asset price panels.

Builds cross-sectional return-dispersion series (CSAD/CSSD) from a price
panel and fits static and Markov-switching herding regressions with
Newey-West inference, regime-count selection and per-regime verdicts.
"""

from herdstat.design import (
    Design,
    build_design_asymmetric,
    build_design_ch,
    build_design_static,
)
from herdstat.dispersion import (
    ExtremeDummies,
    csad_series,
    cssd_series,
    dispersion_table,
    extreme_day_dummies,
)
from herdstat.errors import (
    DesignError,
    EstimationError,
    FetchError,
    HerdstatError,
    InputError,
)
from herdstat.fetch import fetch_history
from herdstat.markov import (
    MarkovSwitchingRegression,
    RegimeVerdict,
    classify_regimes,
    fit_markov_design,
    hamilton_filter,
    kim_smoother,
    order_regimes,
    select_regime_count,
    stationary_distribution,
)
from herdstat.panel import (
    PricePanel,
    compute_returns,
    market_return,
    parse_panel,
    summarize_panel,
    winsorize_returns,
)
from herdstat.regression import (
    FitResult,
    NeweyWestOLS,
    newey_west_cov,
    nw_auto_bandwidth,
    ols_fit,
    significance_stars,
)
from herdstat.simulate import (
    GroundTruth,
    brute_force_loglik,
    brute_force_posteriors,
    simulate_chain,
    simulate_dispersion_table,
    simulate_ms_data,
)

__version__ = "0.1.0"

__all__ = [
    "Design",
    "DesignError",
    "EstimationError",
    "ExtremeDummies",
    "FetchError",
    "FitResult",
    "GroundTruth",
    "HerdstatError",
    "InputError",
    "MarkovSwitchingRegression",
    "NeweyWestOLS",
    "PricePanel",
    "RegimeVerdict",
    "brute_force_loglik",
    "brute_force_posteriors",
    "build_design_asymmetric",
    "build_design_ch",
    "build_design_static",
    "classify_regimes",
    "compute_returns",
    "csad_series",
    "cssd_series",
    "dispersion_table",
    "extreme_day_dummies",
    "fetch_history",
    "fit_markov_design",
    "hamilton_filter",
    "kim_smoother",
    "market_return",
    "newey_west_cov",
    "nw_auto_bandwidth",
    "ols_fit",
    "order_regimes",
    "parse_panel",
    "select_regime_count",
    "significance_stars",
    "simulate_chain",
    "simulate_dispersion_table",
    "simulate_ms_data",
    "stationary_distribution",
    "summarize_panel",
    "winsorize_returns",
]
