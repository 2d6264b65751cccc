"""Price-panel ingestion: parsing, validation, returns, and market aggregates.

Panels are held as date-by-asset pandas frames. Missing observations stay
missing throughout; nothing is ever interpolated, because filled-in prices
would fabricate cross-sectional dispersion downstream.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from herdstat.errors import InputError

LONG_COLUMNS = ("date", "asset", "close", "market_cap")


@dataclass
class ValidationReport:
    """Counts and spans collected while parsing a price panel."""

    n_dates: int = 0
    n_assets: int = 0
    missing_cells: int = 0
    dropped_rows: int = 0
    invalid_close_cells: int = 0
    invalid_cap_cells: int = 0
    asset_spans: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_dates": self.n_dates,
            "n_assets": self.n_assets,
            "missing_cells": self.missing_cells,
            "dropped_rows": self.dropped_rows,
            "invalid_close_cells": self.invalid_close_cells,
            "invalid_cap_cells": self.invalid_cap_cells,
            "asset_spans": self.asset_spans,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


class PricePanel:
    """Date-indexed matrix of closing prices (and market caps) per asset.

    Parameters
    ----------
    close : pd.DataFrame
        Prices with a DatetimeIndex and one column per asset. NaN marks a
        missing observation; every present price must be finite and > 0.
    market_cap : pd.DataFrame, optional
        Same shape as ``close``; NaN-filled frame is used when omitted.
    report : ValidationReport, optional
        Parse-time statistics, attached when the panel comes from a file.
    """

    def __init__(self, close: pd.DataFrame, market_cap: pd.DataFrame | None = None,
                 report: ValidationReport | None = None):
        close = close.sort_index()
        if close.index.has_duplicates:
            dupes = close.index[close.index.duplicated()].unique()
            raise InputError(f"duplicate dates in panel: {list(dupes[:5])}")
        if close.shape[1] < 2:
            raise InputError(f"panel needs at least 2 assets, got {close.shape[1]}")
        if len(close) < 2:
            raise InputError(f"panel needs at least 2 dates, got {len(close)}")
        values = close.to_numpy(dtype=float)
        present = ~np.isnan(values)
        if np.any(~np.isfinite(values) & present) or np.any(values[present] <= 0):
            raise InputError("present close prices must be finite and > 0")
        if market_cap is None:
            market_cap = pd.DataFrame(np.nan, index=close.index, columns=close.columns)
        else:
            market_cap = market_cap.reindex(index=close.index, columns=close.columns)
        self.close = close
        self.market_cap = market_cap
        self.report = report if report is not None else _report_from_frames(close)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.close.index

    @property
    def assets(self) -> list[str]:
        return list(self.close.columns)

    def filter_top_assets(self, n: int) -> "PricePanel":
        """Keep the ``n`` assets with the highest mean market capitalization."""
        caps = self.market_cap.mean(axis=0, skipna=True)
        if caps.isna().all():
            raise InputError("cannot rank assets by market cap: no cap data in panel")
        keep = caps.sort_values(ascending=False).index[:n]
        keep = [a for a in self.assets if a in set(keep)]
        filtered = PricePanel(self.close[keep], self.market_cap[keep])
        # Parse-time counts survive the filter; span/size fields re-derive.
        filtered.report.dropped_rows = self.report.dropped_rows
        filtered.report.invalid_close_cells = self.report.invalid_close_cells
        filtered.report.invalid_cap_cells = self.report.invalid_cap_cells
        return filtered

    def to_long_frame(self) -> pd.DataFrame:
        long = self.close.stack(future_stack=True).rename("close").to_frame()
        long["market_cap"] = self.market_cap.stack(future_stack=True)
        long = long.reset_index()
        long.columns = ["date", "asset", "close", "market_cap"]
        return long.dropna(subset=["close"]).reset_index(drop=True)

    def to_long_csv(self, path) -> None:
        frame = self.to_long_frame()
        frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
        frame.to_csv(path, index=False)


def _report_from_frames(close: pd.DataFrame) -> ValidationReport:
    report = ValidationReport(n_dates=len(close), n_assets=close.shape[1])
    report.missing_cells = int(close.isna().to_numpy().sum())
    for asset in close.columns:
        obs = close[asset].dropna()
        if len(obs):
            report.asset_spans[str(asset)] = {
                "first": obs.index[0].strftime("%Y-%m-%d"),
                "last": obs.index[-1].strftime("%Y-%m-%d"),
                "n_obs": int(len(obs)),
            }
        else:
            report.asset_spans[str(asset)] = {"first": None, "last": None, "n_obs": 0}
    return report


def _parse_dates(raw: pd.Series) -> pd.DatetimeIndex:
    try:
        return pd.DatetimeIndex(pd.to_datetime(raw, format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise InputError(f"unparseable date in panel: {exc}") from None


def _to_text_buffer(source) -> io.StringIO:
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        return io.StringIO(Path(source).read_text(encoding="utf-8"))
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def parse_panel(source, format: str = "long") -> PricePanel:
    """Parse a CSV price panel.

    Parameters
    ----------
    source : path, bytes, str or file-like
        CSV content. ``long`` format needs a ``date,asset,close[,market_cap]``
        header; ``wide`` needs a ``date`` column plus one close column per asset.
    format : {"long", "wide"}

    Returns
    -------
    PricePanel
        Validated panel. Rows with empty, zero or negative close are recorded
        as missing and counted in ``panel.report``.
    """
    if format not in ("long", "wide"):
        raise ValueError(f"format must be 'long' or 'wide', got {format!r}")
    buf = _to_text_buffer(source)
    try:
        raw = pd.read_csv(buf, dtype=str, skipinitialspace=True)
    except Exception as exc:
        raise InputError(f"could not read CSV: {exc}") from None
    if format == "long":
        raw.columns = [str(c).strip().lower() for c in raw.columns]
        return _parse_long(raw)
    # Wide: normalize only the date header, asset names keep their case.
    raw.columns = [("date" if str(c).strip().lower() == "date" else str(c).strip())
                   for c in raw.columns]
    return _parse_wide(raw)


def _coerce_close(raw_close: pd.Series, report: ValidationReport) -> pd.Series:
    stripped = raw_close.fillna("").str.strip()
    empty = stripped == ""
    numeric = pd.to_numeric(stripped.where(~empty), errors="coerce")
    bad_text = (~empty) & numeric.isna()
    if bad_text.any():
        sample = stripped[bad_text].iloc[0]
        raise InputError(f"non-numeric close value: {sample!r}")
    nonpositive = numeric.notna() & (numeric <= 0)
    report.invalid_close_cells = int(nonpositive.sum())
    if report.invalid_close_cells:
        warnings.warn(
            f"{report.invalid_close_cells} close value(s) <= 0 treated as missing",
            stacklevel=3,
        )
    return numeric.mask(nonpositive)


def _parse_long(raw: pd.DataFrame) -> PricePanel:
    required = {"date", "asset", "close"}
    if not required.issubset(raw.columns):
        raise InputError(
            f"malformed header: expected columns {','.join(LONG_COLUMNS)}, got {','.join(raw.columns)}"
        )
    report = ValidationReport()
    frame = raw.copy()
    frame["date"] = _parse_dates(frame["date"])
    frame["asset"] = frame["asset"].str.strip()
    dupes = frame.duplicated(subset=["date", "asset"])
    if dupes.any():
        first = frame.loc[dupes, ["date", "asset"]].iloc[0]
        raise InputError(
            f"duplicate (date, asset) pair: ({first['date'].date()}, {first['asset']})"
        )
    frame["close"] = _coerce_close(frame["close"], report)
    if "market_cap" in frame.columns:
        stripped_caps = frame["market_cap"].fillna("").str.strip()
        caps = pd.to_numeric(stripped_caps.where(stripped_caps != ""), errors="coerce")
        negative = caps.notna() & (caps < 0)
        report.invalid_cap_cells = int(negative.sum())
        frame["market_cap"] = caps.mask(negative)
    else:
        frame["market_cap"] = np.nan
    dropped = frame["close"].isna()
    report.dropped_rows = int(dropped.sum())
    close = frame.pivot(index="date", columns="asset", values="close").sort_index()
    caps = frame.pivot(index="date", columns="asset", values="market_cap").sort_index()
    panel = PricePanel(close, caps)
    report.n_dates = len(panel.dates)
    report.n_assets = len(panel.assets)
    report.missing_cells = int(panel.close.isna().to_numpy().sum())
    report.asset_spans = _report_from_frames(panel.close).asset_spans
    panel.report = report
    return panel


def _parse_wide(raw: pd.DataFrame) -> PricePanel:
    if "date" not in raw.columns:
        raise InputError("malformed header: wide format needs a 'date' column")
    assets = [c for c in raw.columns if c != "date"]
    if len(assets) < 2:
        raise InputError(f"panel needs at least 2 assets, got {len(assets)}")
    report = ValidationReport()
    index = _parse_dates(raw["date"])
    if index.has_duplicates:
        dupes = index[index.duplicated()].unique()
        raise InputError(f"duplicate dates in panel: {list(dupes[:5])}")
    close = pd.DataFrame(index=index)
    for asset in assets:
        close[asset] = _coerce_close(raw[asset].astype(str).where(raw[asset].notna()), report).to_numpy()
    panel = PricePanel(close.sort_index())
    report.n_dates = len(panel.dates)
    report.n_assets = len(panel.assets)
    report.missing_cells = int(panel.close.isna().to_numpy().sum())
    report.asset_spans = _report_from_frames(panel.close).asset_spans
    panel.report = report
    return panel


def compute_returns(panel: PricePanel) -> pd.DataFrame:
    """Arithmetic returns (P_t - P_{t-1}) / P_{t-1}, one column per asset.

    A return exists at (t, c) only when the close exists at both t and t-1
    for asset c; gaps propagate as NaN. The first panel date is dropped.
    """
    returns = panel.close.pct_change(fill_method=None).iloc[1:]
    return returns


def market_return(returns: pd.DataFrame, aggregator: str = "median",
                  min_assets: int = 2) -> pd.DataFrame:
    """Cross-sectional market return per date.

    Parameters
    ----------
    returns : pd.DataFrame
        Output of :func:`compute_returns`.
    aggregator : {"median", "mean"}
        Cross-sectional aggregate. Median is the default; the mean is kept
        for sensitivity analysis.
    min_assets : int
        Dates with fewer present returns are excluded.

    Returns
    -------
    pd.DataFrame
        Columns ``rm`` and ``n_assets``, indexed by the retained dates.
    """
    if aggregator not in ("mean", "median"):
        raise ValueError(f"aggregator must be 'mean' or 'median', got {aggregator!r}")
    if min_assets < 2:
        raise ValueError("min_assets must be at least 2")
    counts = returns.notna().sum(axis=1)
    rm = returns.median(axis=1, skipna=True) if aggregator == "median" else returns.mean(axis=1, skipna=True)
    keep = counts >= min_assets
    if not keep.any():
        usable = returns.index[counts > 0]
        span = (f"; usable observations span {usable[0].date()}..{usable[-1].date()}"
                if len(usable) else "")
        raise InputError(
            f"no date has at least {min_assets} asset returns (asset histories do not overlap{span})"
        )
    out = pd.DataFrame({"rm": rm[keep], "n_assets": counts[keep].astype(int)})
    return out


def winsorize_returns(returns: pd.DataFrame, fraction: float) -> pd.DataFrame:
    """Symmetric per-date winsorization at the given tail fraction (robustness runs only)."""
    if not 0 < fraction < 0.5:
        raise ValueError("winsorization fraction must lie in (0, 0.5)")
    lo = returns.quantile(fraction, axis=1)
    hi = returns.quantile(1 - fraction, axis=1)
    return returns.clip(lower=lo, upper=hi, axis=0)


def _sample_skewness(x: np.ndarray) -> float:
    # Bias-corrected (Fisher-Pearson) skewness; undefined for constant series.
    n = len(x)
    m = x.mean()
    m2 = np.mean((x - m) ** 2)
    if m2 == 0 or n < 3:
        return np.nan
    g1 = np.mean((x - m) ** 3) / m2 ** 1.5
    return g1 * np.sqrt(n * (n - 1)) / (n - 2)


def summarize_panel(returns: pd.DataFrame, min_obs: int = 4) -> tuple[pd.DataFrame, dict]:
    """Per-asset descriptive statistics plus grand averages across assets.

    Assets with fewer than ``min_obs`` returns are skipped with a warning
    (the third moment needs at least 4 observations to mean anything).

    Returns
    -------
    (pd.DataFrame, dict)
        A table indexed by asset with columns count, mean, median, sd,
        skewness, min, max, and a dict of grand averages over assets.
    """
    rows = {}
    skipped = []
    for asset in returns.columns:
        x = returns[asset].dropna().to_numpy()
        if len(x) < min_obs:
            skipped.append(str(asset))
            continue
        sd = float(np.std(x, ddof=1))
        rows[str(asset)] = {
            "count": int(len(x)),
            "mean": float(np.mean(x)),
            "median": float(np.median(x)),
            "sd": sd,
            "skewness": float(_sample_skewness(x)) if sd > 0 else np.nan,
            "min": float(np.min(x)),
            "max": float(np.max(x)),
        }
    if skipped:
        warnings.warn(f"skipped {len(skipped)} asset(s) with fewer than {min_obs} returns: "
                      f"{', '.join(skipped[:5])}", stacklevel=2)
    if not rows:
        raise InputError(f"no asset has at least {min_obs} returns")
    table = pd.DataFrame.from_dict(rows, orient="index")
    grand = {f"grand_{k}": float(table[k].mean(skipna=True))
             for k in ("mean", "median", "sd", "skewness")}
    return table, grand
