"""Scale reliability and reaction-weighted topic shares."""
from __future__ import annotations

import numpy as np

from ..errors import DataError, DegenerateDataError


def cronbach_alpha(items) -> float:
    """Cronbach's alpha for a (weeks x items) matrix with no missing values."""
    x = np.asarray(items, dtype=float)
    if x.ndim != 2:
        raise DataError("items must be a 2-D matrix (weeks x items)")
    n, k = x.shape
    if k < 2 or n < 3:
        raise DataError(f"need at least 2 items and 3 weeks, got {k} items and {n} weeks")
    if np.isnan(x).any():
        raise DataError("items contain missing values")
    total_var = x.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise DegenerateDataError("row sums have zero variance")
    return float(k / (k - 1) * (1.0 - x.var(axis=0, ddof=1).sum() / total_var))


def reaction_weighted_topic_share(topic_weights, reactions, weeks, topic: int, n_weeks: int | None = None) -> np.ndarray:
    """Per-week share of reactions attributable to ``topic``.

    ``topic_weights`` is (posts x topics) with rows on the simplex, ``reactions``
    holds one reaction type's count per post, and ``weeks`` the 0-based week of
    each post. Weeks without reactions are NaN.
    """
    w = np.asarray(topic_weights, dtype=float)
    n = np.asarray(reactions, dtype=float)
    wk = np.asarray(weeks, dtype=int)
    if w.ndim != 2 or len(w) != len(n) or len(n) != len(wk):
        raise DataError("topic weights, reactions and weeks must have one row per post")
    if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-6):
        raise DataError("topic weights must lie on the simplex")
    if np.any(n < 0):
        raise DataError("reaction counts must be >= 0")
    if np.any(wk < 0):
        raise DataError("week indices must be >= 0")
    n_weeks = int(wk.max()) + 1 if n_weeks is None and len(wk) else (n_weeks or 0)
    num = np.bincount(wk, weights=w[:, topic] * n, minlength=n_weeks)
    den = np.bincount(wk, weights=n, minlength=n_weeks)
    out = np.full(n_weeks, np.nan)
    np.divide(num, den, out=out, where=den > 0)
    return out
