"""Regression designs for the dispersion-on-market-return herding models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from herdstat._validation import check_full_rank
from herdstat.dispersion import ExtremeDummies
from herdstat.errors import DesignError

# Canonical column names; report formatting maps them to display labels.
COL_CONST = "const"
COL_ABS_RM = "abs_rm"
COL_RM_SQ = "rm_sq"
COL_DOWN_ABS_RM = "down_abs_rm"
COL_UP_ABS_RM = "up_abs_rm"
COL_DOWN_RM_SQ = "down_rm_sq"
COL_UP_RM_SQ = "up_rm_sq"
COL_D_LOWER = "d_lower"
COL_D_UPPER = "d_upper"


def lag_name(j: int) -> str:
    return f"csad_lag{j}"


@dataclass(frozen=True)
class Design:
    """A validated response vector and full-rank design matrix.

    The first column is always the intercept. ``dates`` aligns rows with the
    dispersion series so probability output can be written back per date.
    """

    y: np.ndarray
    X: np.ndarray
    column_names: tuple[str, ...]
    lag_count: int = 0
    dates: pd.DatetimeIndex | None = None
    response_name: str = "csad"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DesignError(f"incompatible design shapes y{y.shape}, X{X.shape}")
        if len(self.column_names) != X.shape[1]:
            raise DesignError("column_names length does not match design width")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DesignError("design contains non-finite values")
        if not np.allclose(X[:, 0], 1.0):
            raise DesignError("first design column must be the intercept (all ones)")
        check_full_rank(X, self.column_names)
        if self.dates is not None and len(self.dates) != X.shape[0]:
            raise DesignError("dates length does not match design rows")

    @property
    def nobs(self) -> int:
        return self.X.shape[0]

    @property
    def n_params(self) -> int:
        return self.X.shape[1]


def _check_length(frame: pd.DataFrame, lag_count: int) -> None:
    if lag_count < 0:
        raise ValueError("lag_count must be non-negative")
    if len(frame) <= lag_count + 4:
        raise DesignError(
            f"dispersion series of length {len(frame)} too short for {lag_count} lag(s)"
        )


def _lag_columns(csad: np.ndarray, lag_count: int) -> tuple[list[np.ndarray], list[str]]:
    cols, names = [], []
    T = len(csad)
    for j in range(1, lag_count + 1):
        cols.append(csad[lag_count - j:T - j])
        names.append(lag_name(j))
    return cols, names


def build_design_static(disp: pd.DataFrame, lag_count: int = 3) -> Design:
    """Design for the symmetric herding regression.

    Columns are [const, |rm|, rm^2, csad lags]; the response is CSAD and the
    first ``lag_count`` dates are dropped to align the lagged columns.
    """
    _check_length(disp, lag_count)
    rm = disp["rm"].to_numpy(dtype=float)
    csad = disp["csad"].to_numpy(dtype=float)
    k = lag_count
    rows = slice(k, len(disp))
    lag_cols, lag_names = _lag_columns(csad, k)
    X = np.column_stack([np.ones(len(csad) - k), np.abs(rm[rows]), rm[rows] ** 2, *lag_cols])
    names = (COL_CONST, COL_ABS_RM, COL_RM_SQ, *lag_names)
    return Design(y=csad[rows], X=X, column_names=names, lag_count=k,
                  dates=disp.index[rows])


def build_design_asymmetric(disp: pd.DataFrame, lag_count: int = 3) -> Design:
    """Design splitting |rm| and rm^2 by market direction.

    D_t = 1 on down days (rm < 0); rm = 0 counts as an up day. Columns are
    [const, D|rm|, (1-D)|rm|, D rm^2, (1-D) rm^2, csad lags].
    """
    _check_length(disp, lag_count)
    rm = disp["rm"].to_numpy(dtype=float)
    csad = disp["csad"].to_numpy(dtype=float)
    k = lag_count
    rows = slice(k, len(disp))
    rm_eff = rm[rows]
    down = (rm_eff < 0).astype(float)
    up = 1.0 - down
    lag_cols, lag_names = _lag_columns(csad, k)
    X = np.column_stack([
        np.ones(len(rm_eff)),
        down * np.abs(rm_eff),
        up * np.abs(rm_eff),
        down * rm_eff ** 2,
        up * rm_eff ** 2,
        *lag_cols,
    ])
    names = (COL_CONST, COL_DOWN_ABS_RM, COL_UP_ABS_RM, COL_DOWN_RM_SQ, COL_UP_RM_SQ, *lag_names)
    return Design(y=csad[rows], X=X, column_names=names, lag_count=k,
                  dates=disp.index[rows])


def build_design_ch(disp: pd.DataFrame, dummies: ExtremeDummies) -> Design:
    """Extreme-day dummy design with CSSD as the response."""
    if "cssd" not in disp.columns or disp["cssd"].isna().any():
        raise DesignError("dispersion table must supply a complete cssd column")
    if len(dummies.dates) != len(disp.index) or not (dummies.dates == disp.index).all():
        raise DesignError("dummy dates do not align with the dispersion series")
    X = np.column_stack([
        np.ones(len(disp)),
        dummies.d_lower.astype(float),
        dummies.d_upper.astype(float),
    ])
    names = (COL_CONST, COL_D_LOWER, COL_D_UPPER)
    return Design(y=disp["cssd"].to_numpy(dtype=float), X=X, column_names=names,
                  lag_count=0, dates=disp.index, response_name="cssd")


def squared_return_columns(column_names) -> list[int]:
    """Indices of the squared-market-return regressors (symmetric or split)."""
    names = list(column_names)
    if COL_RM_SQ in names:
        return [names.index(COL_RM_SQ)]
    idx = [names.index(c) for c in (COL_DOWN_RM_SQ, COL_UP_RM_SQ) if c in names]
    return idx
