"""ARIMA(p, d, q) by conditional sum of squares, AICc order selection, and forecasting.

The model for the d-times differenced series ``y`` is

    (y_t - mu) - sum_i phi_i (y_{t-i} - mu) = e_t + sum_j theta_j e_{t-j}

with pre-sample innovations set to zero and the first ``condition`` values of
``y`` used only as lags. Coefficients are searched over partial
autocorrelations mapped through ``tanh``, so every candidate is causal and
invertible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, stats

from ..errors import DataError, DegenerateDataError, NumericError
from .series import WeeklySeries, longest_run
from .stationarity import difference

MAX_ORDER = 5
N_RESTARTS = 3
MIN_ROOT_MODULUS = 1.01  # order selection skips fits with a root closer to the unit circle


class ArimaFitError(NumericError):
    """The CSS search did not converge; ``best`` holds the best point found, if any."""

    def __init__(self, message: str, best: dict | None = None):
        super().__init__(message)
        self.best = best


class SelectionError(NumericError):
    """No candidate order could be fitted."""


@dataclass(frozen=True)
class ArimaSpec:
    p: int
    d: int
    q: int
    with_intercept: bool = True

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ValueError(f"orders must be >= 0, got {self}")

    @property
    def n_params(self) -> int:
        """Coefficients plus the innovation variance."""
        return self.p + self.q + int(self.with_intercept) + 1

    def __str__(self) -> str:
        return f"ARIMA({self.p},{self.d},{self.q})"


@dataclass
class ArimaFit:
    spec: ArimaSpec
    intercept: float
    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    aicc: float
    residuals: np.ndarray
    n_obs: int  # residuals entering the sum of squares
    log_likelihood: float
    std_errors: dict = field(default_factory=dict)
    converged: bool = True
    sse_path: list[float] = field(default_factory=list, repr=False)

    @property
    def aic(self) -> float:
        return -2.0 * self.log_likelihood + 2.0 * self.spec.n_params

    def params(self) -> list[tuple[str, float, float]]:
        """(term, coefficient, standard error) rows: intercept, ar.L*, ma.L*, sigma2."""
        rows = []
        if self.spec.with_intercept:
            rows.append(("intercept", self.intercept))
        rows += [(f"ar.L{i + 1}", float(v)) for i, v in enumerate(self.ar)]
        rows += [(f"ma.L{j + 1}", float(v)) for j, v in enumerate(self.ma)]
        rows.append(("sigma2", self.sigma2))
        return [(term, value, self.std_errors.get(term, math.nan)) for term, value in rows]


# Parameter maps --------------------------------------------------------------

def pacf_to_ar(partial) -> np.ndarray:
    """Durbin-Levinson: partial autocorrelations in (-1, 1) to causal AR coefficients."""
    phi = np.zeros(0)
    for r in np.asarray(partial, dtype=float):
        phi = np.append(phi - r * phi[::-1], r)
    return phi


def ar_to_pacf(phi) -> np.ndarray:
    """Inverse of ``pacf_to_ar``; raises ValueError for a non-causal polynomial."""
    phi = np.asarray(phi, dtype=float).copy()
    out = np.zeros(len(phi))
    for k in range(len(phi), 0, -1):
        r = phi[-1]
        if not abs(r) < 1:
            raise ValueError("AR polynomial has a root on or inside the unit circle")
        out[k - 1] = r
        phi = (phi[:-1] + r * phi[:-1][::-1]) / (1.0 - r * r)
    return out


def _unpack(u, p, q, with_intercept):
    mu = u[0] if with_intercept else 0.0
    rest = u[int(with_intercept):]
    ar = pacf_to_ar(np.tanh(rest[:p]))
    ma = -pacf_to_ar(np.tanh(rest[p:p + q]))  # 1 + sum theta_j z^j invertible
    return mu, ar, ma


def css_residuals(y, mu: float, ar, ma, condition: int | None = None) -> np.ndarray:
    """Innovations of the ARMA recursion for ``y[condition:]``; ``condition`` defaults to p."""
    ar, ma = np.asarray(ar, dtype=float), np.asarray(ma, dtype=float)
    condition = len(ar) if condition is None else condition
    z = np.asarray(y, dtype=float) - mu
    w = signal.lfilter(np.r_[1.0, -ar], [1.0], z)[condition:]
    if len(ma):
        return signal.lfilter([1.0], np.r_[1.0, ma], w)
    return w


def _css_objective(u, y, p, q, with_intercept, condition):
    mu, ar, ma = _unpack(u, p, q, with_intercept)
    e = css_residuals(y, mu, ar, ma, condition)
    return float(e @ e) / len(e)


def _css_jacobian(y, mu, ar, ma, condition, with_intercept) -> np.ndarray:
    """Exact derivatives of the CSS residuals in (mu, phi, theta), by filtering.

    From e_t + sum theta_j e_{t-j} = w_t with pre-sample values zero, each
    derivative solves the same recursion driven by -z_{t-i}, -e_{t-j} or -phi(1).
    """
    z = np.asarray(y, dtype=float) - mu
    e = css_residuals(y, mu, ar, ma, condition)
    m, p = len(e), len(ar)
    den = np.r_[1.0, ma]
    cols = []
    if with_intercept:
        cols.append(np.full(m, -(1.0 - float(np.sum(ar)))))
    cols += [-z[condition - i:condition - i + m] for i in range(1, p + 1)]
    cols += [-np.r_[np.zeros(j), e[:m - j]] for j in range(1, len(ma) + 1)]
    if not cols:
        return np.zeros((m, 0))
    return signal.lfilter([1.0], den, np.column_stack(cols), axis=0)


def _gauss_newton_polish(y, mu, ar, ma, condition, with_intercept, max_iter=20):
    """Gauss-Newton steps in natural parameters until the step stops shrinking.

    Steps that raise the sum of squares beyond round-off, or leave the causal and
    invertible region, end the polish.
    """
    p = len(ar)

    def split(t):
        return (t[0] if with_intercept else 0.0), t[int(with_intercept):][:p], t[int(with_intercept):][p:]

    theta = np.r_[[mu] if with_intercept else [], ar, ma]
    e = css_residuals(y, mu, ar, ma, condition)
    sse, last = float(e @ e), math.inf
    for _ in range(max_iter):
        jac = _css_jacobian(y, *split(theta), condition, with_intercept)
        step, *_ = np.linalg.lstsq(jac, -e, rcond=None)
        size = float(np.linalg.norm(step))
        if not np.isfinite(size) or size >= last:
            break
        cand = theta + step
        c_mu, c_ar, c_ma = split(cand)
        try:
            ar_to_pacf(c_ar)
            ar_to_pacf(-c_ma)
        except ValueError:
            break
        c_e = css_residuals(y, c_mu, c_ar, c_ma, condition)
        c_sse = float(c_e @ c_e)
        if not c_sse <= sse * (1 + 1e-13):
            break
        theta, e, sse, last = cand, c_e, min(sse, c_sse), size
        if size <= 1e-15 * (1.0 + float(np.linalg.norm(theta))):
            break
    return split(theta)


def _gauss_newton_se(y, theta, p, q, with_intercept, condition, sigma2):
    """Standard errors from sigma2 * (J'J)^-1, J the residual Jacobian in natural parameters."""
    theta = np.asarray(theta, dtype=float)
    mu = theta[0] if with_intercept else 0.0
    rest = theta[int(with_intercept):]
    jac = _css_jacobian(y, mu, rest[:p], rest[p:], condition, with_intercept)
    try:
        cov = sigma2 * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.full(len(theta), math.nan)
    diag = np.diag(cov)
    return np.where(diag >= 0, np.sqrt(np.abs(diag)), math.nan)


def _information(sse: float, n: int, k: int) -> tuple[float, float]:
    """Gaussian concentrated log-likelihood and AICc."""
    sigma2 = sse / n
    ll = -0.5 * n * (math.log(2 * math.pi * sigma2) + 1.0)
    aic = -2.0 * ll + 2.0 * k
    aicc = aic + 2.0 * k * (k + 1) / (n - k - 1) if n - k - 1 > 0 else math.inf
    return ll, aicc


# Fitting ---------------------------------------------------------------------

def _as_array(series) -> np.ndarray:
    values = series.values if isinstance(series, WeeklySeries) else series
    x = np.asarray(values, dtype=float)
    lo, hi = longest_run(x)
    return x[lo:hi]


def min_observations(spec: ArimaSpec) -> int:
    return 3 * (spec.p + spec.q) + spec.d + 11


def fit_arima(series, spec: ArimaSpec, condition: int | None = None) -> ArimaFit:
    """Conditional-sum-of-squares fit on the longest non-missing run of ``series``.

    ``condition`` (default p) is how many leading differenced values serve only as
    lags; ``select_order`` passes a common value so AICc compares like with like.
    The search runs on the standardized series from zero coefficients, then up to
    ``N_RESTARTS`` seeded jittered starts if BFGS stops short.
    """
    x = _as_array(series)
    if len(x) < max(8, min_observations(spec)):
        raise DataError(f"{spec} needs at least {max(8, min_observations(spec))} contiguous values, got {len(x)}")
    y, _ = difference(x, spec.d)
    p, q = spec.p, spec.q
    condition = p if condition is None else condition
    if condition < p:
        raise ValueError("condition must be >= p")
    loc, scale = float(np.mean(y)), float(np.std(y))
    if scale == 0:
        raise DegenerateDataError("series has no variation after differencing")
    n = len(y) - condition

    if p == 0 and q == 0:
        mu = float(np.mean(y[condition:])) if spec.with_intercept else 0.0
        resid = y[condition:] - mu
        sse = float(resid @ resid)
        ll, aicc = _information(sse, n, spec.n_params)
        se = {"intercept": math.sqrt(sse / n / n)} if spec.with_intercept else {}
        return ArimaFit(spec, mu, np.zeros(0), np.zeros(0), sse / n, aicc, resid, n, ll, se, True, [sse])

    ys = (y - loc) / scale
    n_free = p + q + int(spec.with_intercept)
    args = (ys, p, q, spec.with_intercept, condition)
    best, path = None, []
    starts = [np.zeros(n_free)]
    gen = np.random.default_rng(0)
    starts += [gen.normal(0.0, 0.5, n_free) for _ in range(N_RESTARTS)]
    for u0 in starts:
        trace = [_css_objective(u0, *args)]
        res = optimize.minimize(_css_objective, u0, args=args, method="BFGS",
                                callback=lambda uk: trace.append(_css_objective(uk, *args)),
                                options={"gtol": 1e-7, "maxiter": 500})
        if not np.isfinite(res.fun):
            continue
        ok = res.success or np.linalg.norm(res.jac) < 1e-4
        if best is None or res.fun < best[0].fun:
            best, path = (res, ok), trace
        if ok:
            break
    if best is None:
        raise ArimaFitError(f"{spec}: objective is not finite at any start")
    res, ok = best
    mu_s, ar, ma = _unpack(res.x, p, q, spec.with_intercept)
    if not ok:
        raise ArimaFitError(f"{spec}: BFGS did not converge ({res.message})",
                            best={"sse": res.fun * n * scale**2, "ar": ar, "ma": ma})
    # polish to machine precision so estimates do not depend on where BFGS stopped
    # (keeps the fit equivariant to rescaling the data)
    mu_s, ar, ma = _gauss_newton_polish(ys, mu_s, ar, ma, condition, spec.with_intercept)
    e = css_residuals(ys, mu_s, ar, ma, condition)
    path.append(min(path[-1], float(e @ e) / n))

    mu = loc + scale * mu_s if spec.with_intercept else 0.0
    resid = css_residuals(y, mu, ar, ma, condition)
    sse = float(resid @ resid)
    sigma2 = sse / n
    ll, aicc = _information(sse, n, spec.n_params)
    theta = np.r_[[mu] if spec.with_intercept else [], ar, ma]
    se_vec = _gauss_newton_se(y, theta, p, q, spec.with_intercept, condition, sigma2)
    names = (["intercept"] if spec.with_intercept else []) + [f"ar.L{i + 1}" for i in range(p)] \
        + [f"ma.L{j + 1}" for j in range(q)]
    return ArimaFit(spec, float(mu), ar, ma, sigma2, aicc, resid, n, ll,
                    dict(zip(names, se_vec.tolist())), True,
                    [v * n * scale**2 for v in path])


def min_root_modulus(fit: ArimaFit) -> float:
    """Smallest root modulus of the AR and MA polynomials (inf when both are empty)."""
    moduli = [math.inf]
    for poly in (np.r_[1.0, -fit.ar], np.r_[1.0, fit.ma]):
        if len(poly) > 1 and np.any(poly[1:]):
            moduli.append(float(np.min(np.abs(np.roots(poly[::-1])))))
    return min(moduli)


def select_order(series, max_p: int, max_q: int, d: int = 0, with_intercept: bool = True):
    """Exhaustive AICc grid over p <= max_p, q <= max_q at fixed d.

    Every candidate is conditioned on the same ``max_p`` leading values. Candidates
    with a root inside ``MIN_ROOT_MODULUS`` are skipped. Ties go to the model with
    fewer parameters, then to smaller p. Returns ``(spec, fit, table)`` where
    ``table`` maps (p, q) to AICc or to the reason the candidate was dropped.
    """
    if not (0 <= max_p <= MAX_ORDER and 0 <= max_q <= MAX_ORDER):
        raise ValueError(f"max_p and max_q must lie in [0, {MAX_ORDER}]")
    table, fits = {}, {}
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            spec = ArimaSpec(p, d, q, with_intercept)
            try:
                fit = fit_arima(series, spec, condition=max_p)
            except (NumericError, DataError) as exc:
                table[p, q] = str(exc)
                continue
            modulus = min_root_modulus(fit)
            if modulus < MIN_ROOT_MODULUS:
                table[p, q] = f"root modulus {modulus:.4f} too close to the unit circle"
                continue
            fits[p, q] = fit
            table[p, q] = fit.aicc
    if not fits:
        raise SelectionError(f"no ARIMA(p,{d},q) with p <= {max_p}, q <= {max_q} could be fitted")
    key = min(fits, key=lambda pq: (fits[pq].aicc, pq[0] + pq[1], pq[0]))
    return fits[key].spec, fits[key], table


# Forecasting -----------------------------------------------------------------

@dataclass
class Forecast:
    mean: np.ndarray
    se: np.ndarray
    level: float = 0.90

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError(f"level must be in (0, 1), got {self.level}")

    @property
    def horizon(self) -> int:
        return len(self.mean)

    @property
    def multiplier(self) -> float:
        return band_multiplier(self.level)

    @property
    def lower(self) -> np.ndarray:
        return self.mean - self.multiplier * self.se

    @property
    def upper(self) -> np.ndarray:
        return self.mean + self.multiplier * self.se


def band_multiplier(level: float) -> float:
    """Two-sided normal quantile for a central band of probability ``level``."""
    return float(stats.norm.ppf(0.5 + level / 2.0))


def psi_weights(ar, ma, d: int, n: int) -> np.ndarray:
    """First ``n`` MA-infinity weights of the integrated model (psi_0 = 1)."""
    poly = np.r_[1.0, -np.asarray(ar, dtype=float)]
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    impulse = np.zeros(n)
    impulse[0] = 1.0
    return signal.lfilter(np.r_[1.0, np.asarray(ma, dtype=float)], poly, impulse)


def forecast(fit: ArimaFit, history, horizon: int, level: float = 0.90) -> Forecast:
    """Point forecasts and standard errors for ``horizon`` steps past the end of ``history``.

    ``history`` is the run the model was fitted on (on the fitted scale). Means
    follow the ARMA recursion with future innovations set to zero and are then
    integrated d times; ``se[h] = sigma * sqrt(sum_{j<h} psi_j^2)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    spec = fit.spec
    x = _as_array(history)
    y, _ = difference(x, spec.d)
    p, q = spec.p, spec.q
    e = css_residuals(y, fit.intercept, fit.ar, fit.ma, condition=min(p, len(y)))
    z = list(y - fit.intercept)
    e = list(e)
    zf = []
    for h in range(horizon):
        val = sum(fit.ar[i] * z[-1 - i] for i in range(p))
        # innovations after the sample are zero; only observed ones enter
        val += sum(fit.ma[j] * e[-1 - (j - h)] for j in range(h, q) if j - h < len(e))
        z.append(val)
        zf.append(val)
    mean = np.asarray(zf) + fit.intercept
    for k in range(spec.d, 0, -1):
        last = difference(x, k - 1)[0][-1]
        mean = last + np.cumsum(mean)
    psi = psi_weights(fit.ar, fit.ma, spec.d, horizon)
    se = math.sqrt(fit.sigma2) * np.sqrt(np.cumsum(psi**2))
    return Forecast(mean, se, level)


# Evaluation ------------------------------------------------------------------

@dataclass(frozen=True)
class GofResult:
    chi2: float
    dof: int
    p_value: float


def chi_square_gof(observed, fc: Forecast) -> GofResult:
    """Sum of squared standardized forecast errors over non-missing observed weeks.

    ``observed[i]`` is compared with horizon ``i + 1``; dof is the number of
    weeks that entered the sum.
    """
    obs = np.asarray(observed, dtype=float)
    if len(obs) > fc.horizon:
        raise ValueError(f"{len(obs)} observed weeks but only {fc.horizon} forecast steps")
    mask = ~np.isnan(obs)
    dof = int(mask.sum())
    if dof == 0:
        raise DataError("no non-missing observed weeks to evaluate")
    se = fc.se[:len(obs)][mask]
    if np.any(se <= 0):
        raise DegenerateDataError("forecast standard error is zero at an evaluated week")
    chi2 = float(np.sum(((obs[mask] - fc.mean[:len(obs)][mask]) / se) ** 2))
    return GofResult(chi2, dof, float(stats.chi2.sf(chi2, dof)))


def percent_change(observed, predicted, weeks=None, method: str = "weekly") -> tuple[float, int]:
    """Average percent difference of observed from predicted, on the reporting scale.

    ``method="weekly"`` averages ``100 (obs - pred) / pred`` over weeks;
    ``"totals"`` compares the sums instead. Weeks with a missing value are skipped;
    weeks with ``pred <= 0`` are skipped and counted. ``weeks`` optionally selects
    indices. Returns ``(percent, n_excluded)``.
    """
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if obs.shape != pred.shape:
        raise ValueError("observed and predicted must align")
    if weeks is not None:
        idx = np.asarray(list(weeks), dtype=int)
        obs, pred = obs[idx], pred[idx]
    both = ~np.isnan(obs) & ~np.isnan(pred)
    bad = both & (pred <= 0)
    keep = both & ~bad
    if not keep.any():
        raise DataError("no aligned weeks with a positive prediction")
    if method == "weekly":
        value = float(np.mean(100.0 * (obs[keep] - pred[keep]) / pred[keep]))
    elif method == "totals":
        value = float(100.0 * (obs[keep].sum() - pred[keep].sum()) / pred[keep].sum())
    else:
        raise ValueError(f"unknown method {method!r}")
    return value, int(bad.sum())


def simulate_continuation(fit: ArimaFit, history, horizon: int, rng) -> np.ndarray:
    """Sample a future path of length ``horizon`` from the fitted model given ``history``."""
    fc = forecast(fit, history, horizon)
    shocks = rng.normal(0.0, math.sqrt(fit.sigma2), horizon)
    psi = psi_weights(fit.ar, fit.ma, fit.spec.d, horizon)
    return fc.mean + np.convolve(shocks, psi)[:horizon]
