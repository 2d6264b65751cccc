"""Cross-sectional dispersion series and extreme-day indicators.

CSAD is the per-date average absolute deviation of asset returns from the
market return; CSSD is the per-date sample standard deviation around it.
Both are centered on whichever aggregate (median by default) produced the
market-return series, so the centering and the regressors always agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np
import pandas as pd

from herdstat.errors import InputError


def _deviations(returns: pd.DataFrame, market: pd.DataFrame) -> pd.DataFrame:
    missing = market.index.difference(returns.index)
    if len(missing):
        raise InputError(f"market series has dates absent from the return panel: {missing[0].date()}")
    aligned = returns.loc[market.index]
    return aligned.sub(market["rm"], axis=0)


def csad_series(returns: pd.DataFrame, market: pd.DataFrame) -> pd.Series:
    """Cross-sectional absolute deviation, (1/N_t) * sum_i |R_it - rm_t|."""
    dev = _deviations(returns, market)
    return dev.abs().mean(axis=1, skipna=True).rename("csad")


def cssd_series(returns: pd.DataFrame, market: pd.DataFrame) -> pd.Series:
    """Cross-sectional standard deviation, sqrt(sum_i (R_it - rm_t)^2 / (N_t - 1))."""
    dev = _deviations(returns, market)
    n = dev.notna().sum(axis=1)
    if (n < 2).any():
        bad = n.index[n < 2][0]
        raise InputError(f"date {bad.date()} has fewer than 2 asset returns (N-1 division)")
    ss = (dev ** 2).sum(axis=1, skipna=True)
    return np.sqrt(ss / (n - 1)).rename("cssd")


def dispersion_table(returns: pd.DataFrame, market: pd.DataFrame) -> pd.DataFrame:
    """Combined per-date table with columns rm, csad, cssd, n_assets."""
    return pd.DataFrame({
        "rm": market["rm"],
        "csad": csad_series(returns, market),
        "cssd": cssd_series(returns, market),
        "n_assets": market["n_assets"].astype(int),
    })


@dataclass(frozen=True)
class ExtremeDummies:
    """Indicator pair for dates in the extreme tails of the market return."""

    dates: pd.DatetimeIndex
    d_lower: np.ndarray
    d_upper: np.ndarray
    tail_fraction: float

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"d_lower": self.d_lower, "d_upper": self.d_upper},
                            index=self.dates)


def extreme_day_dummies(market: pd.DataFrame, tail_fraction: float) -> ExtremeDummies:
    """Flag dates whose market return lies in the lower / upper empirical tail.

    The threshold is the lower empirical order statistic at ceil(q*T); the
    upper tail is symmetric. The two indicators are disjoint by construction
    and a distribution too concentrated to separate them is rejected.
    """
    if not 0 < tail_fraction <= 0.10:
        raise ValueError(f"tail_fraction must lie in (0, 0.10], got {tail_fraction}")
    rm = market["rm"].to_numpy(dtype=float)
    T = len(rm)
    if T < ceil(1.0 / tail_fraction):
        raise InputError(f"series of length {T} too short for tail fraction {tail_fraction}")
    k = ceil(tail_fraction * T)
    ordered = np.sort(rm)
    lower_cut = ordered[k - 1]
    upper_cut = ordered[T - k]
    if lower_cut >= upper_cut:
        raise InputError("degenerate market-return distribution: tail quantiles overlap")
    d_lower = (rm <= lower_cut).astype(int)
    d_upper = (rm >= upper_cut).astype(int)
    return ExtremeDummies(dates=market.index, d_lower=d_lower, d_upper=d_upper,
                          tail_fraction=float(tail_fraction))
