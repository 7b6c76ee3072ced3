"""Augmented Dickey-Fuller test (constant, no trend) and differencing."""
from __future__ import annotations

import math

import numpy as np

from .series import DataError, DegenerateDataError, longest_run

# Quantiles of the Dickey-Fuller t statistic with a constant (Fuller 1976, table 8.5.2).
_PROBS = np.array([0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99])
_SIZES = np.array([25, 50, 100, 250, 500, np.inf])
_QUANTILES = np.array([
    [-3.75, -3.33, -3.00, -2.63, -0.37, 0.00, 0.34, 0.72],
    [-3.58, -3.22, -2.93, -2.60, -0.40, -0.03, 0.29, 0.66],
    [-3.51, -3.17, -2.89, -2.58, -0.42, -0.05, 0.26, 0.63],
    [-3.46, -3.14, -2.88, -2.57, -0.42, -0.06, 0.24, 0.62],
    [-3.44, -3.13, -2.87, -2.57, -0.43, -0.07, 0.24, 0.61],
    [-3.43, -3.12, -2.86, -2.57, -0.44, -0.07, 0.23, 0.60],
])
P_FLOOR, P_CEIL = 0.001, 0.999


def critical_values(n: int) -> dict[float, float]:
    """Table quantiles interpolated linearly in 1/n."""
    inv = 1.0 / np.asarray(_SIZES)
    row = np.array([np.interp(1.0 / n, inv[::-1], _QUANTILES[::-1, j]) for j in range(len(_PROBS))])
    return dict(zip(_PROBS.tolist(), row.tolist()))


def adf_pvalue(stat: float, n: int) -> float:
    """Left-tail p-value interpolated from the quantile table, clamped to [P_FLOOR, P_CEIL]."""
    cv = np.array(list(critical_values(n).values()))
    if stat < cv[0]:
        return P_FLOOR
    if stat > cv[-1]:
        return P_CEIL
    return float(np.interp(stat, cv, _PROBS))


def _ols(y, X):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return beta, resid


def _lagged_design(x, lag, start):
    """Regressors for dx[t] on (1, x[t-1], dx[t-1..t-lag]) for t >= start."""
    dx = np.diff(x)
    rows = np.arange(start, len(dx))
    cols = [np.ones(len(rows)), x[rows]]
    cols += [dx[rows - i] for i in range(1, lag + 1)]
    return dx[rows], np.column_stack(cols)


def adf_test(values, max_lag: int | None = None) -> tuple[float, float, int]:
    """ADF regression with a constant; lag order chosen by AIC on a common sample.

    Uses the longest run of non-missing values. Returns ``(statistic, p_value, lag)``.
    """
    x = np.asarray(values, dtype=float)
    lo, hi = longest_run(x)
    x = x[lo:hi]
    n = len(x)
    if n < 20:
        raise DataError(f"ADF needs at least 20 contiguous values, got {n}")
    if np.ptp(x) == 0:
        raise DegenerateDataError("ADF on a constant series")
    if max_lag is None:
        max_lag = int(math.ceil(12.0 * (n / 100.0) ** 0.25))
    max_lag = max(0, min(max_lag, n // 2 - 3))

    best_lag, best_aic = 0, np.inf
    for lag in range(max_lag + 1):
        y, X = _lagged_design(x, lag, max_lag)
        _, resid = _ols(y, X)
        m = len(y)
        aic = m * math.log(resid @ resid / m) + 2 * X.shape[1]
        if aic < best_aic - 1e-12:
            best_lag, best_aic = lag, aic

    y, X = _lagged_design(x, best_lag, best_lag)
    beta, resid = _ols(y, X)
    m, k = X.shape
    s2 = resid @ resid / (m - k)
    if s2 <= 0:
        raise DegenerateDataError("ADF regression fits exactly; series is deterministic")
    cov = s2 * np.linalg.inv(X.T @ X)
    stat = float(beta[1] / math.sqrt(cov[1, 1]))
    return stat, adf_pvalue(stat, m), best_lag


def difference(x, d: int = 1) -> tuple[np.ndarray, list[float]]:
    """d-fold first differences and the leading values needed to undo them."""
    x = np.asarray(x, dtype=float)
    if d < 0:
        raise ValueError("d must be >= 0")
    if len(x) < d + 1:
        raise DataError(f"series of length {len(x)} too short to difference {d} times")
    initials = []
    for _ in range(d):
        initials.append(float(x[0]))
        x = np.diff(x)
    return x, initials


def invert_difference(diffed, initials, d: int | None = None) -> np.ndarray:
    """Undo ``difference``: ``invert_difference(*difference(x, d)) == x``."""
    if isinstance(initials, (int, float)):
        initials = [float(initials)]
    initials = list(initials)
    if d is not None and d != len(initials):
        raise ValueError(f"need {d} initial values, got {len(initials)}")
    x = np.asarray(diffed, dtype=float)
    for x0 in reversed(initials):
        x = np.concatenate([[x0], x0 + np.cumsum(x)])
    return x
