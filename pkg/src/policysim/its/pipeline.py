"""Interrupted-time-series pipeline: pre-policy model, counterfactual band, and effect size."""
from __future__ import annotations

import datetime as dt
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DataError, DegenerateDataError, NumericError
from .arima import ArimaFit, ArimaSpec, Forecast, GofResult, chi_square_gof, forecast, percent_change, select_order
from .series import WeeklySeries, inverse, preprocess
from .stationarity import adf_test, difference

DEFAULT_MAX_ORDER = 5
MIN_PRE_WEEKS = 20


@dataclass(frozen=True)
class ItsOptions:
    transform: str = "identity"  # identity, log, logit
    max_p: int = DEFAULT_MAX_ORDER
    max_q: int = DEFAULT_MAX_ORDER
    level: float = 0.90
    policy_date: dt.date | None = None
    max_d: int = 2
    adf_alpha: float = 0.05
    logit_eps: float = 0.0
    pct_method: str = "weekly"


@dataclass
class BandRow:
    date: dt.date
    observed: float
    mean: float
    lower: float
    upper: float

    @property
    def inside(self) -> bool | None:
        if math.isnan(self.observed):
            return None
        return bool(self.lower <= self.observed <= self.upper)


@dataclass
class ItsReport:
    spec: ArimaSpec
    fit: ArimaFit
    order_table: dict
    adf: list[dict]
    forecast: Forecast  # on the transformed scale, starting after the fitted run
    gof: GofResult
    percent_change: float
    n_excluded: int  # post weeks dropped from the percent change for a non-positive prediction
    band: list[BandRow]
    options: ItsOptions
    n_fit: int  # length of the pre-policy run the model was fitted on
    gap: int  # pre-policy weeks between the end of that run and the policy date
    pre: WeeklySeries = field(repr=False, default=None)

    @property
    def n_outside(self) -> int:
        return sum(row.inside is False for row in self.band)

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        return {
            "spec": {"p": self.spec.p, "d": self.spec.d, "q": self.spec.q,
                     "with_intercept": self.spec.with_intercept},
            "coefficients": [{"term": t, "coef": clean(c), "std_err": clean(s)} for t, c, s in self.fit.params()],
            "aicc": clean(self.fit.aicc),
            "n_fit": self.n_fit,
            "gap": self.gap,
            "adf": [{k: clean(v) for k, v in row.items()} for row in self.adf],
            "order_table": [{"p": p, "q": q, "aicc": clean(v) if isinstance(v, float) else None,
                             "error": v if isinstance(v, str) else None}
                            for (p, q), v in sorted(self.order_table.items())],
            "chi2": self.gof.chi2,
            "dof": self.gof.dof,
            "p_value": self.gof.p_value,
            "percent_change": self.percent_change,
            "n_excluded": self.n_excluded,
            "weeks_outside_band": self.n_outside,
            "options": {k: (v.isoformat() if isinstance(v, dt.date) else v) for k, v in asdict(self.options).items()},
        }


@contextmanager
def _stage(name: str):
    try:
        yield
    except (DataError, NumericError) as exc:
        exc.args = (f"{name}: {exc}",) + exc.args[1:]
        raise


def choose_differencing(values, max_d: int = 2, alpha: float = 0.05) -> tuple[int, list[dict]]:
    """Difference until the ADF test rejects a unit root at ``alpha`` (or ``max_d`` is reached)."""
    rows = []
    for d in range(max_d + 1):
        y = difference(values, d)[0] if d else np.asarray(values, dtype=float)
        try:
            stat, p, lag = adf_test(y)
        except DegenerateDataError:
            if d == 0:
                raise
            break
        except DataError:
            break  # too short to test further
        rows.append({"d": d, "statistic": stat, "p_value": p, "lag": lag})
        if p <= alpha:
            return d, rows
    return (rows[-1]["d"] if rows else 0), rows


def run_its(pre: WeeklySeries, post: WeeklySeries, options: ItsOptions = ItsOptions()) -> ItsReport:
    """Fit the pre-policy series, project it over the post period, and compare.

    The model is fitted on the longest contiguous run of non-missing pre-policy
    values (after the transform); the forecast starts where that run ends, so any
    trailing pre-policy gap is bridged before the post period begins.
    """
    if len(post) == 0:
        raise DataError("post-policy segment is empty")
    if post.start_date != pre.start_date + dt.timedelta(weeks=len(pre)):
        raise DataError("pre and post segments are not contiguous")
    transform = "identity" if options.transform in ("none", None) else options.transform

    with _stage("preprocess"):
        pre_t = preprocess(pre, transform, eps=options.logit_eps)
        post_t = preprocess(post, transform, eps=options.logit_eps)
        if np.isnan(post_t.values).all():
            raise DataError("post-policy segment has no usable values")
        lo, hi = pre_t.longest_run()
        run = pre_t.values[lo:hi]
        if len(run) < 8:
            raise DataError(f"longest contiguous pre-policy run has {len(run)} values, need 8")
    with _stage("stationarity"):
        d, adf_rows = choose_differencing(run, options.max_d, options.adf_alpha)
    with _stage("order selection"):
        spec, fit, table = select_order(run, options.max_p, options.max_q, d)
    gap = len(pre) - hi
    with _stage("forecast"):
        fc = forecast(fit, run, gap + len(post), options.level)
    with _stage("goodness of fit"):
        observed = np.r_[np.full(gap, np.nan), post_t.values]
        gof = chi_square_gof(observed, fc)

    obs = inverse(post_t.values, transform)
    mean = inverse(fc.mean[gap:], transform)
    lower = inverse(fc.lower[gap:], transform)
    upper = inverse(fc.upper[gap:], transform)
    with _stage("percent change"):
        pct, n_excluded = percent_change(obs, mean, method=options.pct_method)
    band = [BandRow(date, float(o), float(m), float(a), float(b))
            for date, o, m, a, b in zip(post.dates, obs, mean, lower, upper)]
    return ItsReport(spec, fit, table, adf_rows, fc, gof, pct, n_excluded, band, options,
                     len(run), gap, pre)


def run_its_at(series: WeeklySeries, policy_date: dt.date, options: ItsOptions = ItsOptions()) -> ItsReport:
    """Split ``series`` at ``policy_date`` and run the pipeline."""
    if not series.start_date < policy_date <= series.dates[-1]:
        raise DataError(f"policy date {policy_date} is outside the series ({series.start_date} to {series.dates[-1]})")
    pre, post = series.split(policy_date)
    if len(pre) < MIN_PRE_WEEKS:
        raise DataError(f"need at least {MIN_PRE_WEEKS} pre-policy weeks, got {len(pre)}")
    if options.policy_date != policy_date:
        options = ItsOptions(**{**asdict(options), "policy_date": policy_date})
    return run_its(pre, post, options)
