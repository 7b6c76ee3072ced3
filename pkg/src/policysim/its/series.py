"""Weekly series container and the transforms applied before model fitting."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, DegenerateDataError


@dataclass
class WeeklySeries:
    start_date: dt.date
    values: np.ndarray  # NaN marks a missing week
    label: str = ""
    transform: str = field(default="identity", compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(weeks=i) for i in range(len(self.values))]

    @property
    def n_observed(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.values)))

    def with_values(self, values, transform: str | None = None) -> "WeeklySeries":
        return WeeklySeries(self.start_date, values, self.label, transform or self.transform)

    def split(self, policy_date: dt.date) -> tuple["WeeklySeries", "WeeklySeries"]:
        """Weeks starting before ``policy_date`` and the rest."""
        k = sum(d < policy_date for d in self.dates)
        post_start = self.start_date + dt.timedelta(weeks=k)
        return (WeeklySeries(self.start_date, self.values[:k], self.label, self.transform),
                WeeklySeries(post_start, self.values[k:], self.label, self.transform))

    def longest_run(self) -> tuple[int, int]:
        return longest_run(self.values)


def longest_run(values) -> tuple[int, int]:
    """(start, stop) of the longest stretch without NaN; the latest wins ties."""
    best, start = (0, 0), None
    ok = np.append(~np.isnan(np.asarray(values, dtype=float)), False)
    for i, flag in enumerate(ok):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start >= best[1] - best[0]:
                best = (start, i)
            start = None
    return best


TRANSFORMS = ("identity", "log", "logit")


def _log(x):
    x = np.asarray(x, dtype=float)
    if np.any(x[~np.isnan(x)] < 0):
        raise DataError("log transform needs values >= 0")
    with np.errstate(divide="ignore"):
        out = np.log(x)
    out[x == 0] = np.nan
    return out


def _logit(x, eps: float = 0.0):
    x = np.asarray(x, dtype=float)
    seen = x[~np.isnan(x)]
    if np.any((seen < 0) | (seen > 1)):
        raise DataError("logit transform needs values in [0, 1]")
    if eps:
        x = np.clip(x, eps, 1 - eps)
    with np.errstate(divide="ignore"):
        out = np.log(x) - np.log1p(-x)
    out[(x == 0) | (x == 1)] = np.nan
    return out


def forward(values, transform: str, eps: float = 0.0) -> np.ndarray:
    if transform == "identity":
        return np.asarray(values, dtype=float).copy()
    if transform == "log":
        return _log(values)
    if transform == "logit":
        return _logit(values, eps)
    raise ValueError(f"unknown transform {transform!r}")


def inverse(values, transform: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if transform == "identity":
        return values.copy()
    if transform == "log":
        return np.exp(values)
    if transform == "logit":
        return 1.0 / (1.0 + np.exp(-values))
    raise ValueError(f"unknown transform {transform!r}")


def normalize_by_venue_count(series: WeeklySeries, counts) -> WeeklySeries:
    counts = np.asarray(counts, dtype=float)
    if counts.shape != series.values.shape:
        raise DataError("venue counts must align with the series weeks")
    if np.any(~(counts > 0)):
        raise DataError("venue counts must be positive")
    return series.with_values(series.values / counts)


def preprocess(series: WeeklySeries, transform: str = "identity", counts=None, eps: float = 0.0) -> WeeklySeries:
    """Apply ``transform`` ("identity", "log", "logit" or "normalize").

    Zeros under log, and exact 0 or 1 under logit, become missing weeks. Logit
    clamps to ``[eps, 1 - eps]`` first when ``eps`` is set.
    """
    if transform == "normalize":
        if counts is None:
            raise DataError("normalize needs venue counts")
        return normalize_by_venue_count(series, counts)
    return series.with_values(forward(series.values, transform, eps), transform)
