"""Shared fixtures and the acceptance-criteria terminal summary."""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

LONG_CSV = """date,asset,close,market_cap
2017-01-01,BTC,1000,16000000000
2017-01-02,BTC,1100,17000000000
2017-01-03,BTC,1050,16500000000
2017-01-01,ETH,8,700000000
2017-01-02,ETH,8.4,730000000
2017-01-03,ETH,8.2,720000000
"""


@pytest.fixture
def long_csv() -> str:
    return LONG_CSV


def random_return_panel(rng: np.random.Generator, n_assets: int, n_dates: int,
                        missing_prob: float = 0.15) -> pd.DataFrame:
    """Small return panel with missing cells, keeping >= 2 returns per date."""
    dates = pd.date_range("2020-01-01", periods=n_dates, freq="D")
    values = 0.05 * rng.standard_normal((n_dates, n_assets))
    mask = rng.random((n_dates, n_assets)) < missing_prob
    for t in range(n_dates):
        if mask[t].sum() > n_assets - 2:
            mask[t, :2] = False
    values[mask] = np.nan
    return pd.DataFrame(values, index=dates, columns=[f"A{i}" for i in range(n_assets)])


@pytest.fixture
def make_return_panel():
    return random_return_panel


def make_dispersion_frame(rng: np.random.Generator, T: int) -> pd.DataFrame:
    """Synthetic rm/csad/cssd frame shaped like the dispersion CSV."""
    dates = pd.date_range("2019-06-01", periods=T, freq="D")
    rm = 0.02 * rng.standard_t(3, size=T)
    csad = np.abs(0.01 + 0.3 * np.abs(rm) + 0.003 * rng.standard_normal(T)) + 1e-4
    return pd.DataFrame({"rm": rm, "csad": csad, "cssd": csad * 1.4,
                         "n_assets": 50}, index=dates)


@pytest.fixture
def make_dispersion():
    return make_dispersion_frame


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" in rep.nodeid and getattr(rep, "when", "call") == "call":
                rows.append((rep.nodeid.split("::")[-1], status))
    for rep in terminalreporter.stats.get("skipped", []):
        if "test_acceptance.py" in rep.nodeid:
            rows.append((rep.nodeid.split("::")[-1], "skipped"))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(set(rows)):
            label = {"passed": "PASS", "failed": "FAIL", "error": "ERROR", "skipped": "SKIP"}[status]
            terminalreporter.write_line(f"{label:5s} {name}")
