"""OLS with Newey-West (HAC) inference as a scikit-learn style estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from herdstat._validation import as_float_matrix, as_float_vector, check_full_rank
from herdstat.design import Design
from herdstat.errors import EstimationError

TWO_PI = 2.0 * math.pi


def nw_auto_bandwidth(nobs: int) -> int:
    """Newey-West rule of thumb, floor(4 * (T/100)^(2/9))."""
    return int(math.floor(4.0 * (nobs / 100.0) ** (2.0 / 9.0)))


def normal_two_sided_pvalue(t: float) -> float:
    """Two-sided p-value of a standard-normal statistic."""
    return math.erfc(abs(t) / math.sqrt(2.0))


def significance_stars(t: float) -> str:
    """*** / ** / * at the 1% / 5% / 10% two-sided normal levels."""
    p = normal_two_sided_pvalue(t)
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def newey_west_cov(X, residuals, bandwidth: int) -> np.ndarray:
    """Newey-West HAC coefficient covariance with Bartlett weights.

    Computes (X'X)^-1 S (X'X)^-1 with
    S = Gamma_0 + sum_{l=1..L} (1 - l/(L+1)) (Gamma_l + Gamma_l'),
    Gamma_l = sum_t u_t u_{t-l} x_t x_{t-l}'. Bandwidth 0 collapses to the
    White heteroskedasticity-robust estimator.
    """
    X = as_float_matrix(X)
    u = as_float_vector(residuals, "residuals")
    T = X.shape[0]
    if u.shape[0] != T:
        raise ValueError("residuals length does not match design rows")
    if not 0 <= bandwidth < T:
        raise ValueError(f"bandwidth must lie in [0, {T - 1}], got {bandwidth}")
    scores = X * u[:, None]
    S = scores.T @ scores
    for lag in range(1, bandwidth + 1):
        w = 1.0 - lag / (bandwidth + 1.0)
        gamma = scores[lag:].T @ scores[:-lag]
        S += w * (gamma + gamma.T)
    XtX = X.T @ X
    try:
        XtX_inv = np.linalg.inv(XtX)
    except np.linalg.LinAlgError:
        raise EstimationError("X'X is singular; cannot form HAC covariance") from None
    cov = XtX_inv @ S @ XtX_inv
    return (cov + cov.T) / 2.0


def gaussian_loglik(residuals: np.ndarray) -> float:
    """Maximized Gaussian log-likelihood of a regression, sigma^2 at its MLE."""
    T = len(residuals)
    sigma2 = float(residuals @ residuals) / T
    if sigma2 <= 0:
        # Exact interpolation: the Gaussian likelihood is unbounded.
        return math.inf
    return -0.5 * T * (math.log(TWO_PI) + math.log(sigma2) + 1.0)


class NeweyWestOLS(RegressorMixin, BaseEstimator):
    """Ordinary least squares with Newey-West HAC standard errors.

    The design matrix is used as-is; include a constant column when an
    intercept is wanted (the herding designs always carry one first).

    Parameters
    ----------
    bandwidth : int or "auto"
        HAC truncation lag. "auto" applies floor(4 * (T/100)^(2/9)).

    Attributes
    ----------
    coef_ : ndarray of shape (p,)
        Least-squares coefficients.
    hac_se_ : ndarray of shape (p,)
        Newey-West standard errors.
    t_stats_ : ndarray of shape (p,)
        coef_ / hac_se_.
    cov_ : ndarray of shape (p, p)
        HAC coefficient covariance.
    residuals_, r_squared_, r_squared_adj_, loglik_, aic_, nobs_, bandwidth_
    """

    def __init__(self, bandwidth: int | str = "auto"):
        self.bandwidth = bandwidth

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_float_vector(y)
        T, p = X.shape
        if y.shape[0] != T:
            raise ValueError("X and y have different numbers of rows")
        if T <= p:
            raise EstimationError(f"need more observations ({T}) than parameters ({p})")
        check_full_rank(X)
        if self.bandwidth == "auto":
            bandwidth = nw_auto_bandwidth(T)
        else:
            bandwidth = int(self.bandwidth)
        coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
        residuals = y - X @ coef
        cov = newey_west_cov(X, residuals, bandwidth)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_stats = np.where(se > 0, coef / se, np.inf * np.sign(coef))
        ssr = float(residuals @ residuals)
        tss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ssr / tss if tss > 0 else (1.0 if ssr == 0 else 0.0)
        loglik = gaussian_loglik(residuals)
        self.coef_ = coef
        self.residuals_ = residuals
        self.cov_ = cov
        self.hac_se_ = se
        self.t_stats_ = t_stats
        self.r_squared_ = r2
        self.r_squared_adj_ = 1.0 - (1.0 - r2) * (T - 1) / (T - p) if T > p else r2
        self.loglik_ = loglik
        self.aic_ = 2.0 * p - 2.0 * loglik
        self.nobs_ = T
        self.bandwidth_ = bandwidth
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = as_float_matrix(X)
        return X @ self.coef_


@dataclass
class FitResult:
    """Reporting view of a fitted regression, aligned with its column names."""

    column_names: tuple[str, ...]
    coef: np.ndarray
    hac_se: np.ndarray
    t_stats: np.ndarray
    stars: tuple[str, ...]
    r_squared: float
    r_squared_adj: float
    loglik: float
    aic: float
    nobs: int
    bandwidth: int
    lag_count: int
    residuals: np.ndarray
    response_name: str = "csad"

    def to_dict(self) -> dict:
        return {
            "columns": list(self.column_names),
            "coef": [float(c) for c in self.coef],
            "se": [float(s) for s in self.hac_se],
            "t": [float(t) for t in self.t_stats],
            "stars": list(self.stars),
            "r2": float(self.r_squared),
            "r2_adj": float(self.r_squared_adj),
            "loglik": float(self.loglik),
            "aic": float(self.aic),
            "nobs": int(self.nobs),
            "bandwidth": int(self.bandwidth),
            "lag_count": int(self.lag_count),
            "response": self.response_name,
        }


def ols_fit(design: Design, bandwidth: int | str = "auto") -> FitResult:
    """Fit a Design by OLS with Newey-West inference and package the report."""
    est = NeweyWestOLS(bandwidth=bandwidth).fit(design.X, design.y)
    stars = tuple(significance_stars(t) for t in est.t_stats_)
    return FitResult(
        column_names=design.column_names,
        coef=est.coef_,
        hac_se=est.hac_se_,
        t_stats=est.t_stats_,
        stars=stars,
        r_squared=est.r_squared_,
        r_squared_adj=est.r_squared_adj_,
        loglik=est.loglik_,
        aic=est.aic_,
        nobs=est.nobs_,
        bandwidth=est.bandwidth_,
        lag_count=design.lag_count,
        residuals=est.residuals_,
        response_name=design.response_name,
    )
