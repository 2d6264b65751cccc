"""Synthetic regime-switching data and exact-likelihood oracles.

Everything here is a pure function of (parameters, seed). The brute-force
likelihood sums over every regime path and is deliberately exponential: it
exists to validate the Hamilton filter, not to be fast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from herdstat._validation import as_float_matrix, as_float_vector, check_transition_matrix
from herdstat.design import COL_ABS_RM, COL_CONST, COL_RM_SQ, Design, lag_name
from herdstat.markov import _gaussian_log_densities, stationary_distribution

MAX_BRUTE_FORCE_PATHS = 2_000_000


@dataclass(frozen=True)
class GroundTruth:
    """Generating parameters and realized state path of a simulated dataset."""

    states: np.ndarray
    coefficients: np.ndarray
    sigmas: np.ndarray
    transition: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "sigmas": self.sigmas.tolist(),
            "transition": self.transition.tolist(),
            "seed": int(self.seed),
        }


def save_simulation_params(path, truth: GroundTruth) -> None:
    Path(path).write_text(json.dumps(truth.to_dict(), indent=2, sort_keys=True))


def load_simulation_params(path) -> dict:
    raw = json.loads(Path(path).read_text())
    return {
        "coefficients": np.asarray(raw["coefficients"], dtype=float),
        "sigmas": np.asarray(raw["sigmas"], dtype=float),
        "transition": np.asarray(raw["transition"], dtype=float),
        "seed": int(raw["seed"]),
    }


def simulate_chain(transition, T: int, seed: int) -> np.ndarray:
    """Simulate a Markov chain of length T, first state from the stationary law."""
    P = check_transition_matrix(transition)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(P, axis=1)
    states = np.empty(T, dtype=np.int64)
    draw = rng.random(T)
    states[0] = np.searchsorted(np.cumsum(stationary_distribution(P)), draw[0])
    for t in range(1, T):
        states[t] = np.searchsorted(cum[states[t - 1]], draw[t])
    return np.minimum(states, P.shape[0] - 1)


def simulate_market_returns(T: int, rng: np.random.Generator,
                            scale: float = 0.02, df: float = 3.0) -> np.ndarray:
    """Fat-tailed synthetic market returns (scaled Student-t), daily-crypto sized."""
    return scale * rng.standard_t(df, size=T)


def simulate_ms_data(coefficients, sigmas, transition, T: int, seed: int,
                     lag_count: int = 0, rm: np.ndarray | None = None,
                     rm_scale: float = 0.02, burn_in: int | None = None,
                     start_date: str = "2017-01-01") -> tuple[Design, GroundTruth]:
    """Generate (Design, GroundTruth) from a Gaussian regime-switching regression.

    The regressor block is [const, |rm|, rm^2] with ``lag_count`` recursive
    lags of the generated response appended; ``coefficients`` must be shaped
    (S, 3 + lag_count). When ``rm`` is omitted it is drawn from a scaled
    Student-t with 3 degrees of freedom. A burn-in prefix (50 by default when
    lags are present) initializes the recursion and is discarded.
    """
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    P = check_transition_matrix(transition, n_regimes=coefficients.shape[0])
    if np.any(sigmas < 0):
        raise ValueError("sigmas must be non-negative")
    expected_p = 3 + lag_count
    if coefficients.shape[1] != expected_p:
        raise ValueError(f"coefficients must have {expected_p} columns for lag_count={lag_count}")
    if burn_in is None:
        burn_in = 50 if lag_count > 0 else 0
    total = T + burn_in
    rng = np.random.default_rng(seed)
    states = simulate_chain(P, total, seed=int(rng.integers(2 ** 31)))
    if rm is None:
        rm = simulate_market_returns(total, rng, scale=rm_scale)
    else:
        rm = np.asarray(rm, dtype=float)
        if len(rm) < total:
            raise ValueError(f"rm must supply at least {total} values (T + burn-in)")
        rm = rm[:total]
    noise = rng.standard_normal(total)
    base = np.column_stack([np.ones(total), np.abs(rm), rm ** 2])
    y = np.zeros(total)
    lag_buffer = np.zeros(lag_count)
    rows = np.empty((total, expected_p))
    for t in range(total):
        x = np.concatenate([base[t], lag_buffer]) if lag_count else base[t]
        rows[t] = x
        s = states[t]
        y[t] = x @ coefficients[s] + sigmas[s] * noise[t]
        if lag_count:
            lag_buffer = np.concatenate([[y[t]], lag_buffer[:-1]])
    keep = slice(burn_in, total)
    names = (COL_CONST, COL_ABS_RM, COL_RM_SQ,
             *(lag_name(j) for j in range(1, lag_count + 1)))
    dates = pd.date_range(start_date, periods=T, freq="D")
    design = Design(y=y[keep], X=rows[keep], column_names=names,
                    lag_count=lag_count, dates=dates)
    truth = GroundTruth(states=states[keep].copy(), coefficients=coefficients,
                        sigmas=sigmas, transition=P, seed=seed)
    return design, truth


def simulate_dispersion_table(coefficients, sigmas, transition, T: int, seed: int,
                              lag_count: int = 0, n_assets: int = 100,
                              start_date: str = "2017-01-01") -> tuple[pd.DataFrame, GroundTruth]:
    """Synthetic table in the dispersion-CSV schema, so fakes flow through the pipeline."""
    design, truth = simulate_ms_data(coefficients, sigmas, transition, T, seed,
                                     lag_count=lag_count, start_date=start_date)
    rm_col = list(design.column_names).index(COL_ABS_RM)
    sign_seed = np.random.default_rng(seed + 1).random(T) < 0.5
    rm = design.X[:, rm_col] * np.where(sign_seed, 1.0, -1.0)
    frame = pd.DataFrame({
        "rm": rm,
        "csad": design.y,
        "cssd": np.abs(design.y) * 1.5,
        "n_assets": n_assets,
    }, index=design.dates)
    frame.index.name = "date"
    return frame, truth


def _path_block_loglik(paths: np.ndarray, log_init: np.ndarray,
                       log_P: np.ndarray, log_dens: np.ndarray) -> np.ndarray:
    T = paths.shape[1]
    lp = log_init[paths[:, 0]] + log_dens[0, paths[:, 0]]
    for t in range(1, T):
        lp = lp + log_P[paths[:, t - 1], paths[:, t]] + log_dens[t, paths[:, t]]
    return lp


def _logsumexp(values: np.ndarray) -> float:
    m = np.max(values)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(values - m))))


def _enumerate_paths(S: int, T: int):
    """Yield (block of paths, block log-weights placeholder) in memory-bounded chunks."""
    total = S ** T
    chunk = 262_144
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        flat = np.arange(start, stop)
        block = np.empty((stop - start, T), dtype=np.int64)
        for t in range(T - 1, -1, -1):
            block[:, t] = flat % S
            flat //= S
        yield block


def brute_force_loglik(X, y, coefficients, sigmas, transition,
                       initial_probs=None) -> float:
    """Exact log-likelihood by summation over every regime path.

    The instance size S^T is capped at 2e6 paths; beyond that the filter is
    the only feasible evaluator, which is exactly the point of this oracle.
    """
    X = as_float_matrix(X)
    y = as_float_vector(y)
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    P = check_transition_matrix(transition, n_regimes=coefficients.shape[0])
    S = P.shape[0]
    T = len(y)
    if S ** T > MAX_BRUTE_FORCE_PATHS:
        raise ValueError(f"S^T = {S}^{T} exceeds the {MAX_BRUTE_FORCE_PATHS}-path cap")
    init = stationary_distribution(P) if initial_probs is None else np.asarray(initial_probs, float)
    log_dens = _gaussian_log_densities(X, y, coefficients, sigmas)
    with np.errstate(divide="ignore"):
        log_init = np.log(init)
        log_P = np.log(P)
    partials = [
        _logsumexp(_path_block_loglik(block, log_init, log_P, log_dens))
        for block in _enumerate_paths(S, T)
    ]
    return _logsumexp(np.asarray(partials))


def brute_force_posteriors(X, y, coefficients, sigmas, transition,
                           initial_probs=None) -> np.ndarray:
    """Exact smoothed regime probabilities Pr(S_t = s | all data) by enumeration."""
    X = as_float_matrix(X)
    y = as_float_vector(y)
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    P = check_transition_matrix(transition, n_regimes=coefficients.shape[0])
    S = P.shape[0]
    T = len(y)
    if S ** T > MAX_BRUTE_FORCE_PATHS:
        raise ValueError(f"S^T = {S}^{T} exceeds the {MAX_BRUTE_FORCE_PATHS}-path cap")
    init = stationary_distribution(P) if initial_probs is None else np.asarray(initial_probs, float)
    log_dens = _gaussian_log_densities(X, y, coefficients, sigmas)
    with np.errstate(divide="ignore"):
        log_init = np.log(init)
        log_P = np.log(P)
    blocks = list(_enumerate_paths(S, T))
    lps = [_path_block_loglik(block, log_init, log_P, log_dens) for block in blocks]
    total = _logsumexp(np.concatenate(lps))
    posterior = np.zeros((T, S))
    for block, lp in zip(blocks, lps):
        w = np.exp(lp - total)
        for s in range(S):
            posterior[:, s] += ((block == s) * w[:, None]).sum(axis=0)
    return posterior
