"""Markov-switching regression estimated by EM with Hamilton filtering.

The filter and smoother operate on a batch axis so that independent
problems (EM restarts, Hessian evaluation points) share one pass over the
time dimension; the recursions themselves are inherently sequential.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from herdstat._validation import (
    as_float_matrix,
    as_float_vector,
    check_transition_matrix,
)
from herdstat.design import Design, squared_return_columns
from herdstat.errors import DesignError, EstimationError
from herdstat.regression import normal_two_sided_pvalue, significance_stars

MAX_REGIMES = 6
_PROB_FLOOR = 1e-15


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix (least-squares solve)."""
    P = np.asarray(transition, dtype=float)
    S = P.shape[0]
    A = np.vstack([P.T - np.eye(S), np.ones((1, S))])
    b = np.zeros(S + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.maximum(pi, _PROB_FLOOR)
    return pi / pi.sum()


def _stationary_batch(transition: np.ndarray) -> np.ndarray:
    """Stationary distributions for a (B, S, S) stack of transition matrices."""
    B, S, _ = transition.shape
    A = np.concatenate([np.swapaxes(transition, 1, 2) - np.eye(S)[None],
                        np.ones((B, 1, S))], axis=1)
    AtA = np.swapaxes(A, 1, 2) @ A
    # b is zero except its last entry, so A'b is a vector of ones.
    ones = np.ones((B, S, 1))
    try:
        pi = np.linalg.solve(AtA, ones)[:, :, 0]
    except np.linalg.LinAlgError:
        pi = np.stack([stationary_distribution(transition[b]) for b in range(B)])
        return pi
    pi = np.maximum(pi, _PROB_FLOOR)
    return pi / pi.sum(axis=1, keepdims=True)


def _gaussian_log_densities(X: np.ndarray, y: np.ndarray, coefficients: np.ndarray,
                            sigmas: np.ndarray) -> np.ndarray:
    """Per-date, per-regime Gaussian log densities, shape (T, S)."""
    resid = y[:, None] - X @ coefficients.T
    sig2 = sigmas ** 2
    with np.errstate(over="ignore"):  # extreme residuals legitimately map to -inf
        return -0.5 * (np.log(2.0 * math.pi * sig2)[None, :] + resid ** 2 / sig2[None, :])


def _filter_batch(log_dens: np.ndarray, transition: np.ndarray,
                  initial: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hamilton filter over a batch: (B,T,S) log densities -> loglik, filtered, predicted.

    Densities are rescaled per date by their max before exponentiation, so the
    recursion never underflows regardless of T.
    """
    B, T, S = log_dens.shape
    m = log_dens.max(axis=2)
    bad = ~np.isfinite(m)
    if bad.any():
        b, t = np.argwhere(bad)[0]
        raise EstimationError(
            f"all regime densities underflow at observation {t} (batch member {b})"
        )
    dens = np.exp(log_dens - m[:, :, None])
    filtered = np.empty((B, T, S))
    predicted = np.empty((B, T, S))
    loglik = np.zeros(B)
    pred = initial
    for t in range(T):
        predicted[:, t] = pred
        joint = pred * dens[:, t]
        norm = joint.sum(axis=1)
        if np.any(norm <= 0.0) or not np.all(np.isfinite(norm)):
            b = int(np.argwhere((norm <= 0.0) | ~np.isfinite(norm))[0][0])
            raise EstimationError(
                f"zero total likelihood at observation {t} (batch member {b})"
            )
        filt = joint / norm[:, None]
        filtered[:, t] = filt
        loglik += np.log(norm) + m[:, t]
        if t < T - 1:
            pred = (filt[:, None, :] @ transition)[:, 0, :]
    return loglik, filtered, predicted


def _smooth_batch(filtered: np.ndarray, predicted: np.ndarray,
                  transition: np.ndarray) -> np.ndarray:
    """Kim smoother over a batch. Zero predicted probabilities drop their term."""
    B, T, S = filtered.shape
    smoothed = np.empty_like(filtered)
    smoothed[:, -1] = filtered[:, -1]
    for t in range(T - 2, -1, -1):
        pnext = predicted[:, t + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(pnext > 0.0, smoothed[:, t + 1] / pnext, 0.0)
        back = (transition @ ratio[:, :, None])[:, :, 0]
        smoothed[:, t] = filtered[:, t] * back
    return smoothed


def hamilton_filter(X, y, coefficients, sigmas, transition,
                    initial_probs=None) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact log-likelihood and one-step regime probabilities.

    Parameters
    ----------
    X, y : array-like
        Design matrix (T, p) and response (T,).
    coefficients : array-like of shape (S, p)
        Per-regime regression coefficients.
    sigmas : array-like of shape (S,)
        Per-regime residual standard deviations, all > 0.
    transition : array-like of shape (S, S)
        Row-stochastic transition matrix.
    initial_probs : array-like of shape (S,), optional
        Defaults to the stationary distribution of ``transition``.

    Returns
    -------
    (loglik, filtered, predicted)
        Total log-likelihood, Pr(S_t | y_1..t) and Pr(S_t | y_1..t-1),
        both of shape (T, S).
    """
    X = as_float_matrix(X)
    y = as_float_vector(y)
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    if np.any(sigmas <= 0):
        raise ValueError("sigmas must be strictly positive")
    P = check_transition_matrix(transition, n_regimes=coefficients.shape[0])
    if initial_probs is None:
        initial = stationary_distribution(P)
    else:
        initial = np.asarray(initial_probs, dtype=float)
        if initial.shape != (P.shape[0],) or abs(initial.sum() - 1.0) > 1e-8 or np.any(initial < 0):
            raise ValueError("initial_probs must be a probability vector over regimes")
    log_dens = _gaussian_log_densities(X, y, coefficients, sigmas)
    ll, filtered, predicted = _filter_batch(log_dens[None], P[None], initial[None])
    return float(ll[0]), filtered[0], predicted[0]


def kim_smoother(filtered, predicted, transition) -> np.ndarray:
    """Full-sample regime probabilities from a completed forward pass."""
    filtered = np.atleast_2d(np.asarray(filtered, dtype=float))
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    P = check_transition_matrix(transition, n_regimes=filtered.shape[1])
    if filtered.shape != predicted.shape:
        raise ValueError("filtered and predicted must have identical shapes")
    return _smooth_batch(filtered[None], predicted[None], P[None])[0]


@dataclass
class _RestartState:
    coefficients: np.ndarray
    sigmas: np.ndarray
    transition: np.ndarray
    loglik: float = -np.inf
    path: list = None
    filtered: np.ndarray = None
    predicted: np.ndarray = None
    smoothed: np.ndarray = None
    initial: np.ndarray = None
    converged: bool = False
    failed: str | None = None
    n_iter: int = 0
    previous_params: tuple | None = None

    def __post_init__(self):
        if self.path is None:
            self.path = []

    def revert(self) -> None:
        if self.previous_params is not None:
            self.coefficients, self.sigmas, self.transition = self.previous_params


class MarkovSwitchingRegression(BaseEstimator):
    """Gaussian Markov-switching linear regression fitted by EM.

    The E-step runs the Hamilton filter and Kim smoother; the M-step solves
    a probability-weighted least-squares system in which non-switching
    columns are pooled across regimes, then updates regime variances and
    transition counts. Restarts use contiguous-block initial assignments
    rotated by a seeded offset, and the best converged restart by
    log-likelihood wins (ties break on the lowest restart index).

    Parameters
    ----------
    n_regimes : int
        Number of hidden regimes S, 1 <= S <= 6.
    switching_intercept : bool
        When False (default) the first design column is pooled across
        regimes; the first column is assumed to be the intercept.
    switching_variance : bool
        Per-regime residual variances (default) or one pooled variance.
    max_iter : int
        EM iteration cap per restart.
    tol : float
        Relative log-likelihood change declaring convergence.
    n_restarts : int
        Independent EM starts.
    seed : int
        Seeds the restart offsets; identical seeds give bit-identical fits.
    order_by : int, sequence of int, or None
        Design column(s) whose coefficient (sum) orders the regimes
        ascending after fitting. None keeps estimation order.
    compute_se : bool
        Compute observed-information standard errors after fitting.

    Attributes
    ----------
    coef_ : ndarray of shape (S, p)
        Per-regime coefficients (pooled columns repeat across rows).
    sigmas_ : ndarray of shape (S,)
    transition_ : ndarray of shape (S, S)
        Row-stochastic transition matrix.
    initial_probs_ : ndarray of shape (S,)
        Stationary distribution used to start the filter.
    filtered_probs_, predicted_probs_, smoothed_probs_ : ndarray of shape (T, S)
    se_ : ndarray of shape (S, p) or None
        Observed-information standard errors of the coefficients.
    sigma_se_ : ndarray of shape (S,) or None
    loglik_, aic_, n_parameters_, converged_, n_iter_, loglik_path_
    """

    def __init__(self, n_regimes: int = 2, switching_intercept: bool = False,
                 switching_variance: bool = True, max_iter: int = 1000,
                 tol: float = 1e-8, n_restarts: int = 10, seed: int = 0,
                 order_by=None, compute_se: bool = True):
        self.n_regimes = n_regimes
        self.switching_intercept = switching_intercept
        self.switching_variance = switching_variance
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.seed = seed
        self.order_by = order_by
        self.compute_se = compute_se

    # ------------------------------------------------------------------ fit

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_float_vector(y)
        T, p = X.shape
        S = int(self.n_regimes)
        if not 1 <= S <= MAX_REGIMES:
            raise ValueError(f"n_regimes must lie in [1, {MAX_REGIMES}], got {S}")
        if self.tol <= 0 or self.max_iter < 1 or self.n_restarts < 1:
            raise ValueError("tol must be > 0, max_iter >= 1, n_restarts >= 1")
        if y.shape[0] != T:
            raise ValueError("X and y have different numbers of rows")
        if T <= S * p:
            raise DesignError(f"need more than S*p = {S * p} observations, got {T}")
        switching = np.ones(p, dtype=bool)
        if not self.switching_intercept and p >= 1:
            switching[0] = False
        self._X, self._y = X, y
        self._switching = switching
        self._sig2_floor = max(1e-12 * float(np.var(y)), 1e-300)
        rng = np.random.default_rng(self.seed)
        restarts = []
        for r in range(self.n_restarts):
            offset = int(rng.integers(T)) if S > 1 else 0
            try:
                restarts.append(self._initial_state(offset, S))
            except np.linalg.LinAlgError:
                state = _RestartState(np.zeros((S, p)), np.ones(S), np.eye(S))
                state.failed = "singular initial M-step"
                restarts.append(state)
        self._run_em(restarts, S)
        best = self._select_best(restarts, S)
        self._adopt(best, S)
        if self.order_by is not None:
            order_regimes(self, self.order_by)
        self.se_ = None
        self.sigma_se_ = None
        if self.compute_se:
            self.compute_standard_errors()
        return self

    def predict(self, X):
        """Expected response under the stationary regime distribution."""
        check_is_fitted(self, "coef_")
        X = as_float_matrix(X)
        weights = self.initial_probs_
        return X @ (weights @ self.coef_)

    # ----------------------------------------------------------- EM internals

    def _initial_state(self, offset: int, S: int) -> _RestartState:
        T = self._X.shape[0]
        assign = ((np.arange(T) + offset) % T) * S // T
        weights = np.zeros((T, S))
        weights[np.arange(T), assign] = 1.0
        counts = np.ones((S, S))
        for t in range(T - 1):
            counts[assign[t], assign[t + 1]] += 1.0
        coefficients, sigmas = self._solve_coefficients(weights, np.ones(S))
        transition = counts / counts.sum(axis=1, keepdims=True)
        return _RestartState(coefficients, sigmas, transition)

    def _solve_coefficients(self, weights: np.ndarray, sigmas: np.ndarray):
        """Exact M-step for coefficients (pooled + switching) then variances.

        ``weights`` are regime occupation probabilities; ``sigmas`` supply the
        per-regime precisions of the current iterate.
        """
        X, y = self._X, self._y
        T, p = X.shape
        S = weights.shape[1]
        sw = self._switching
        Xp, Xs = X[:, ~sw], X[:, sw]
        pp, ps = Xp.shape[1], Xs.shape[1]
        prec = weights / (sigmas ** 2)[None, :]
        dim = pp + S * ps
        A = np.zeros((dim, dim))
        b = np.zeros(dim)
        if pp:
            wsum = prec.sum(axis=1)
            A[:pp, :pp] = Xp.T @ (Xp * wsum[:, None])
            b[:pp] = Xp.T @ (y * wsum)
        for s in range(S):
            sl = slice(pp + s * ps, pp + (s + 1) * ps)
            Xs_w = Xs * prec[:, s][:, None]
            A[sl, sl] = Xs.T @ Xs_w
            b[sl] = Xs_w.T @ y
            if pp:
                cross = Xp.T @ Xs_w
                A[:pp, sl] = cross
                A[sl, :pp] = cross.T
        beta = np.linalg.solve(A, b)
        coefficients = np.zeros((S, p))
        coefficients[:, ~sw] = beta[:pp][None, :]
        coefficients[:, sw] = beta[pp:].reshape(S, ps)
        resid = y[:, None] - X @ coefficients.T
        wres = weights * resid ** 2
        if self.switching_variance:
            occ = weights.sum(axis=0)
            sig2 = np.where(occ > 0, wres.sum(axis=0) / np.maximum(occ, 1e-300),
                            sigmas ** 2)
        else:
            sig2 = np.full(S, wres.sum() / T)
        sig2 = np.maximum(sig2, self._sig2_floor)
        return coefficients, np.sqrt(sig2)

    def _e_step(self, states: list[_RestartState]):
        """Batched E-step: returns (survivors, ll, filt, pred, sm, init).

        A restart whose likelihood blows up (collapsed variance, underflow)
        is marked failed and dropped instead of poisoning the batch.
        """
        X, y = self._X, self._y
        survivors = list(states)
        while survivors:
            coef = np.stack([st.coefficients for st in survivors])
            sig = np.stack([st.sigmas for st in survivors])
            P = np.stack([st.transition for st in survivors])
            init = _stationary_batch(P)
            resid = y[None, :, None] - np.einsum("tp,bsp->bts", X, coef)
            sig2 = sig ** 2
            with np.errstate(over="ignore"):
                log_dens = -0.5 * (np.log(2.0 * math.pi * sig2)[:, None, :]
                                   + resid ** 2 / sig2[:, None, :])
            healthy = np.isfinite(log_dens.max(axis=2)).all(axis=1)
            if not healthy.all():
                for keep, st in zip(healthy, survivors):
                    if not keep:
                        st.failed = "likelihood underflow (collapsed regime)"
                survivors = [st for keep, st in zip(healthy, survivors) if keep]
                continue
            ll, filt, pred = _filter_batch(log_dens, P, init)
            sm = _smooth_batch(filt, pred, P)
            return survivors, ll, filt, pred, sm, init, P
        return [], None, None, None, None, None, None

    def _run_em(self, restarts: list[_RestartState], S: int) -> None:
        active = [r for r in restarts if r.failed is None]
        for iteration in range(self.max_iter):
            if not active:
                break
            active, ll, filt, pred, sm, init, P = self._e_step(active)
            if not active:
                break
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(pred[:, 1:] > 0.0, sm[:, 1:] / pred[:, 1:], 0.0)
            xi_sum = np.einsum("bti,btj->bij", filt[:, :-1], ratio) * P
            still_active = []
            for k, st in enumerate(active):
                st.n_iter = iteration + 1
                previous = st.loglik
                current = float(ll[k])
                if current < previous - 1e-9:
                    # GEM guard: the stationary initial distribution makes the
                    # transition update slightly inexact; step back to the best
                    # iterate (whose E-step output is already stored) and stop.
                    st.revert()
                    st.converged = True
                    continue
                st.loglik = current
                st.path.append(current)
                st.filtered, st.predicted, st.smoothed = filt[k], pred[k], sm[k]
                st.initial = init[k]
                if previous > -np.inf and abs(current - previous) < self.tol * max(1.0, abs(previous)):
                    st.converged = True
                    continue
                try:
                    self._m_step(st, sm[k], xi_sum[k])
                except np.linalg.LinAlgError:
                    st.failed = "singular M-step (a regime lost support)"
                    continue
                still_active.append(st)
            active = still_active

    def _m_step(self, st: _RestartState, smoothed: np.ndarray, xi_sum: np.ndarray) -> None:
        st.previous_params = (st.coefficients, st.sigmas, st.transition)
        st.coefficients, st.sigmas = self._solve_coefficients(smoothed, st.sigmas)
        rows = xi_sum.sum(axis=1, keepdims=True)
        transition = np.where(rows > 0, xi_sum / np.maximum(rows, 1e-300), st.transition)
        transition = np.maximum(transition, 0.0)
        st.transition = transition / transition.sum(axis=1, keepdims=True)

    def _select_best(self, restarts: list[_RestartState], S: int) -> _RestartState:
        p = self._X.shape[1]
        eligible = []
        starved = 0
        for st in restarts:
            if st.failed is not None or not st.converged or st.smoothed is None:
                continue
            if st.smoothed.sum(axis=0).min() < p:
                st.failed = "starved regime"
                starved += 1
                continue
            eligible.append(st)
        if not eligible:
            if starved:
                raise EstimationError(
                    f"every converged restart left a regime with occupancy below {p}; "
                    f"try fewer than {S} regimes"
                )
            raise EstimationError("no EM restart converged; increase max_iter or restarts")
        best = eligible[0]
        for st in eligible[1:]:
            if st.loglik > best.loglik:
                best = st
        return best

    def _adopt(self, st: _RestartState, S: int) -> None:
        p = self._X.shape[1]
        self.coef_ = st.coefficients
        self.sigmas_ = st.sigmas
        self.transition_ = st.transition
        self.initial_probs_ = st.initial
        self.filtered_probs_ = st.filtered
        self.predicted_probs_ = st.predicted
        self.smoothed_probs_ = st.smoothed
        self.loglik_ = st.loglik
        self.loglik_path_ = tuple(st.path)
        self.converged_ = st.converged
        self.n_iter_ = st.n_iter
        ps = int(self._switching.sum())
        pp = p - ps
        k = pp + S * ps + (S if self.switching_variance else 1) + S * (S - 1)
        self.n_parameters_ = k
        self.aic_ = 2.0 * k - 2.0 * st.loglik

    # ------------------------------------------------------ standard errors

    def _pack_params(self):
        sw = self._switching
        S = self.n_regimes
        parts = [self.coef_[0, ~sw], self.coef_[:, sw].ravel()]
        if self.switching_variance:
            parts.append(self.sigmas_ ** 2)
        else:
            parts.append(self.sigmas_[:1] ** 2)
        parts.append(self.transition_[:, :-1].ravel())
        return np.concatenate(parts)

    def _unpack_params(self, theta: np.ndarray):
        sw = self._switching
        S = self.n_regimes
        p = self._X.shape[1]
        pp = int((~sw).sum())
        ps = p - pp
        pos = 0
        coef = np.zeros((S, p))
        coef[:, ~sw] = theta[pos:pos + pp][None, :]
        pos += pp
        coef[:, sw] = theta[pos:pos + S * ps].reshape(S, ps)
        pos += S * ps
        if self.switching_variance:
            sig2 = theta[pos:pos + S]
            pos += S
        else:
            sig2 = np.full(S, theta[pos])
            pos += 1
        free = theta[pos:].reshape(S, S - 1) if S > 1 else np.zeros((1, 0))
        transition = np.ones((S, S))
        if S > 1:
            transition[:, :-1] = free
            transition[:, -1] = 1.0 - free.sum(axis=1)
        return coef, sig2, transition

    def _loglik_many(self, thetas: np.ndarray, chunk: int = 256) -> np.ndarray:
        X, y = self._X, self._y
        out = np.empty(len(thetas))
        for start in range(0, len(thetas), chunk):
            block = thetas[start:start + chunk]
            coef, sig2, trans = zip(*(self._unpack_params(th) for th in block))
            coef = np.stack(coef)
            sig2 = np.stack(sig2)
            P = np.stack(trans)
            init = _stationary_batch(P)
            resid = y[None, :, None] - np.einsum("tp,bsp->bts", X, coef)
            log_dens = -0.5 * (np.log(2.0 * math.pi * sig2)[:, None, :]
                               + resid ** 2 / sig2[:, None, :])
            ll, _, _ = _filter_batch(log_dens, P, init)
            out[start:start + chunk] = ll
        return out

    def _hessian_steps(self, theta: np.ndarray) -> np.ndarray:
        sw = self._switching
        S = self.n_regimes
        p = self._X.shape[1]
        pp = int((~sw).sum())
        n_coef = pp + S * (p - pp)
        n_sig = S if self.switching_variance else 1
        h = np.empty_like(theta)
        for j in range(len(theta)):
            if j < n_coef:
                h[j] = max(1e-3, 1e-3 * abs(theta[j]))
            elif j < n_coef + n_sig:
                h[j] = 1e-2 * theta[j]
            else:
                h[j] = 1e-3
        # Keep transition perturbations strictly inside the simplex.
        if S > 1:
            free = theta[n_coef + n_sig:].reshape(S, S - 1)
            hfree = h[n_coef + n_sig:].reshape(S, S - 1)
            last = 1.0 - free.sum(axis=1)
            for i in range(S):
                slack = min(float(last[i]), 1.0)
                for j in range(S - 1):
                    room = min(free[i, j], 1.0 - free[i, j], slack) * 0.45
                    hfree[i, j] = min(hfree[i, j], max(room, 0.0))
        return h

    def compute_standard_errors(self) -> np.ndarray:
        """Observed-information standard errors from a numerical Hessian.

        Evaluates the exact filter log-likelihood on a grid of central
        differences around the optimum (batched through one filter pass) and
        inverts the negative Hessian. Parameters whose perturbation would
        leave the admissible region get NaN standard errors.
        """
        check_is_fitted(self, "coef_")
        theta = self._pack_params()
        n = len(theta)
        h = self._hessian_steps(theta)
        frozen = h <= 1e-10
        points = [theta]
        index = {}
        for i in range(n):
            if frozen[i]:
                continue
            for sign in (+1, -1):
                th = theta.copy()
                th[i] += sign * h[i]
                index[(i, sign)] = len(points)
                points.append(th)
        for i in range(n):
            for j in range(i + 1, n):
                if frozen[i] or frozen[j]:
                    continue
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    th = theta.copy()
                    th[i] += si * h[i]
                    th[j] += sj * h[j]
                    index[(i, si, j, sj)] = len(points)
                    points.append(th)
        values = self._loglik_many(np.asarray(points))
        f0 = values[0]
        H = np.full((n, n), np.nan)
        for i in range(n):
            if frozen[i]:
                continue
            H[i, i] = (values[index[(i, 1)]] - 2.0 * f0 + values[index[(i, -1)]]) / h[i] ** 2
            for j in range(i + 1, n):
                if frozen[j]:
                    continue
                num = (values[index[(i, 1, j, 1)]] - values[index[(i, 1, j, -1)]]
                       - values[index[(i, -1, j, 1)]] + values[index[(i, -1, j, -1)]])
                H[i, j] = H[j, i] = num / (4.0 * h[i] * h[j])
        keep = ~frozen
        info = -H[np.ix_(keep, keep)]
        try:
            cov_kept = np.linalg.inv(info)
        except np.linalg.LinAlgError:
            cov_kept = np.linalg.pinv(info)
            warnings.warn("observed information is singular; using pseudo-inverse", stacklevel=2)
        variances = np.full(n, np.nan)
        diag = np.diag(cov_kept).copy()
        diag[diag < 0] = np.nan
        variances[keep] = diag
        se_theta = np.sqrt(variances)
        sw = self._switching
        S = self.n_regimes
        p = self._X.shape[1]
        pp = int((~sw).sum())
        ps = p - pp
        se = np.zeros((S, p))
        se[:, ~sw] = se_theta[:pp][None, :]
        se[:, sw] = se_theta[pp:pp + S * ps].reshape(S, ps)
        self.se_ = se
        if self.switching_variance:
            sig2_se = se_theta[pp + S * ps: pp + S * ps + S]
        else:
            sig2_se = np.full(S, se_theta[pp + S * ps])
        # Delta method: se(sigma) = se(sigma^2) / (2 sigma).
        self.sigma_se_ = sig2_se / (2.0 * self.sigmas_)
        self.se_method_ = "observed-information (numerical Hessian)"
        return self.se_


def order_regimes(fit: MarkovSwitchingRegression, by) -> MarkovSwitchingRegression:
    """Permute regimes so the coefficient (sum) on ``by`` columns ascends.

    All fitted matrices are permuted consistently; the log-likelihood is a
    relabeling invariant and does not change. Already-ordered fits pass
    through unchanged (idempotent).
    """
    check_is_fitted(fit, "coef_")
    idx = [by] if np.isscalar(by) else list(by)
    key = fit.coef_[:, idx].sum(axis=1)
    perm = np.argsort(key, kind="stable")
    if np.array_equal(perm, np.arange(fit.n_regimes)):
        return fit
    fit.coef_ = fit.coef_[perm]
    fit.sigmas_ = fit.sigmas_[perm]
    fit.transition_ = fit.transition_[np.ix_(perm, perm)]
    fit.initial_probs_ = fit.initial_probs_[perm]
    fit.filtered_probs_ = fit.filtered_probs_[:, perm]
    fit.predicted_probs_ = fit.predicted_probs_[:, perm]
    fit.smoothed_probs_ = fit.smoothed_probs_[:, perm]
    if getattr(fit, "se_", None) is not None:
        fit.se_ = fit.se_[perm]
    if getattr(fit, "sigma_se_", None) is not None:
        fit.sigma_se_ = fit.sigma_se_[perm]
    return fit


def fit_markov_design(design: Design, n_regimes: int, **kwargs) -> MarkovSwitchingRegression:
    """Fit a Markov-switching regression on a herding Design.

    Regimes are canonically ordered by their squared-market-return
    coefficient (its sum over the down/up pair for asymmetric designs).
    """
    order_by = squared_return_columns(design.column_names)
    if not order_by:
        order_by = None
    est = MarkovSwitchingRegression(n_regimes=n_regimes, order_by=order_by, **kwargs)
    return est.fit(design.X, design.y)


def select_regime_count(design: Design, candidates, **kwargs):
    """Fit every candidate regime count and keep the minimum-AIC model.

    Returns
    -------
    (best, table)
        The winning fitted estimator (standard errors computed) and a list
        of per-candidate dicts with n_regimes, aic, loglik, converged or the
        failure message. Failed candidates are excluded with a warning.
    """
    candidates = sorted(set(int(s) for s in candidates))
    if not candidates or any(s < 1 for s in candidates):
        raise ValueError("candidates must be a non-empty set of integers >= 1")
    compute_se = kwargs.pop("compute_se", True)
    table = []
    best = None
    for S in candidates:
        try:
            fit = fit_markov_design(design, S, compute_se=False, **kwargs)
        except (EstimationError, DesignError) as exc:
            warnings.warn(f"{S}-regime fit failed and is excluded from selection: {exc}",
                          stacklevel=2)
            table.append({"n_regimes": S, "error": str(exc)})
            continue
        table.append({
            "n_regimes": S,
            "aic": float(fit.aic_),
            "loglik": float(fit.loglik_),
            "n_parameters": int(fit.n_parameters_),
            "converged": bool(fit.converged_),
        })
        if best is None or fit.aic_ < best.aic_:
            best = fit
    if best is None:
        raise EstimationError("every candidate regime count failed to fit")
    if compute_se:
        best.compute_standard_errors()
    return best, table


@dataclass(frozen=True)
class RegimeVerdict:
    """Herding classification of one regime from its squared-return coefficient."""

    regime: int
    direction: str  # "all", "down" or "up"
    coefficient: float
    t_stat: float
    label: str  # "herding", "adverse_herding" or "neutral"
    alpha: float

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "direction": self.direction,
            "coefficient": float(self.coefficient),
            "t_stat": float(self.t_stat),
            "label": self.label,
            "alpha": self.alpha,
        }


def _verdict_label(coefficient: float, t_stat: float, alpha: float) -> str:
    significant = normal_two_sided_pvalue(t_stat) < alpha
    if significant and coefficient < 0:
        return "herding"
    if significant and coefficient > 0:
        return "adverse_herding"
    return "neutral"


def classify_regimes(fit: MarkovSwitchingRegression, column_names,
                     alpha: float = 0.05) -> list[RegimeVerdict]:
    """Per-regime herding verdicts from the squared-market-return coefficients.

    Symmetric designs yield one verdict per regime; asymmetric designs yield
    separate down-market and up-market verdicts. A significantly negative
    coefficient flags herding, a significantly positive one adverse herding.
    """
    check_is_fitted(fit, "coef_")
    if getattr(fit, "se_", None) is None:
        raise EstimationError("standard errors unavailable; call compute_standard_errors() first")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    idx = squared_return_columns(column_names)
    if not idx:
        raise ValueError("design has no squared-market-return column to classify")
    names = list(column_names)
    verdicts = []
    for s in range(fit.n_regimes):
        for j in idx:
            direction = "all"
            if len(idx) == 2:
                direction = "down" if names[j].startswith("down") else "up"
            coefficient = float(fit.coef_[s, j])
            se = float(fit.se_[s, j])
            if se > 0:
                t_stat = coefficient / se
            elif math.isnan(se):
                t_stat = math.nan  # boundary parameter: no usable inference
            else:
                t_stat = math.inf * np.sign(coefficient)
            verdicts.append(RegimeVerdict(
                regime=s + 1,
                direction=direction,
                coefficient=coefficient,
                t_stat=float(t_stat),
                label=_verdict_label(coefficient, t_stat, alpha),
                alpha=alpha,
            ))
    return verdicts


def ms_stars(fit: MarkovSwitchingRegression) -> list[list[str]]:
    """Significance stars for every (regime, column) coefficient."""
    check_is_fitted(fit, "coef_")
    if getattr(fit, "se_", None) is None:
        raise EstimationError("standard errors unavailable; call compute_standard_errors() first")
    out = []
    for s in range(fit.n_regimes):
        row = []
        for c, se in zip(fit.coef_[s], fit.se_[s]):
            t = c / se if se > 0 else math.nan
            row.append(significance_stars(t))
        out.append(row)
    return out
