import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

import oracles
from policysim.errors import DataError, DegenerateDataError
from policysim.its import (ArimaSpec, Forecast, ItsOptions, WeeklySeries, adf_pvalue, adf_test, band_multiplier,
                           chi_square_gof, choose_differencing, cronbach_alpha, difference, fit_arima, forecast,
                           inverse, invert_difference, percent_change, preprocess, psi_weights,
                           reaction_weighted_topic_share, run_its, run_its_at, select_order)
from synth import PLANTED_START, arma_series, planted_policy_date, planted_series

START = dt.date(2020, 1, 6)


def weekly(values, start=START):
    return WeeklySeries(start, np.asarray(values, dtype=float))


def chi2_sf_even(x, dof):
    """Upper tail of chi-square with even dof: exp(-x/2) sum_{k < dof/2} (x/2)^k / k!."""
    half = x / 2.0
    terms = [math.exp(k * math.log(half) - half - math.lgamma(k + 1)) for k in range(dof // 2)]
    return math.fsum(terms)


# transforms ----------------------------------------------------------------------

def test_transform_examples():
    assert preprocess(weekly([0.5]), "logit").values[0] == 0.0
    out = preprocess(weekly([0.0, math.e]), "log").values
    assert math.isnan(out[0]) and out[1] == pytest.approx(1.0)
    assert preprocess(weekly([120.0]), "normalize", counts=[80]).values[0] == 1.5


def test_transform_domain_errors():
    with pytest.raises(DataError):
        preprocess(weekly([-1.0]), "log")
    with pytest.raises(DataError):
        preprocess(weekly([1.5]), "logit")
    with pytest.raises(DataError):
        preprocess(weekly([1.0, 2.0]), "normalize", counts=[1.0, 0.0])
    with pytest.raises(DataError):
        preprocess(weekly([1.0]), "normalize")


def test_logit_boundaries_missing_or_clamped():
    out = preprocess(weekly([0.0, 1.0, 0.25]), "logit").values
    assert np.isnan(out[:2]).all() and out[2] == pytest.approx(math.log(1 / 3))
    assert np.isfinite(preprocess(weekly([0.0, 1.0]), "logit", eps=1e-4).values).all()


@settings(max_examples=200)
@given(st.floats(1e-6, 1 - 1e-6))
def test_logit_inverts(p):
    assert inverse(preprocess(weekly([p]), "logit").values, "logit")[0] == pytest.approx(p, rel=1e-12)


@settings(max_examples=200)
@given(st.floats(1e-6, 1e9))
def test_log_inverts(x):
    assert inverse(preprocess(weekly([x]), "log").values, "log")[0] == pytest.approx(x, rel=1e-12)


# stationarity -----------------------------------------------------------------

def test_adf_random_walk_keeps_unit_root():
    assert sum(p > 0.10 for p in oracles.adf_pvalues("random_walk")) >= 90


def test_adf_white_noise_rejects():
    assert sum(p < 0.01 for p in oracles.adf_pvalues("white_noise")) >= 95


def test_adf_errors():
    with pytest.raises(DegenerateDataError):
        adf_test(np.full(50, 3.0))
    with pytest.raises(DataError):
        adf_test(np.arange(10.0))


def test_adf_pvalue_table_is_monotone_and_clamped():
    stats_grid = np.linspace(-6, 2, 200)
    p = [adf_pvalue(s, 100) for s in stats_grid]
    assert np.all(np.diff(p) >= 0)
    assert p[0] == 0.001 and p[-1] == 0.999
    assert adf_pvalue(-2.89, 100) == pytest.approx(0.05)


def test_differencing_examples():
    x = np.random.default_rng(0).normal(size=30)
    assert np.array_equal(difference(x, 0)[0], x)
    counts = np.random.default_rng(1).integers(0, 10**6, 40).astype(float)
    assert np.array_equal(invert_difference(difference(counts, 1)[0], counts[0], 1), counts)
    assert np.allclose(invert_difference(difference(x, 1)[0], x[0], 1), x, rtol=0, atol=1e-14)
    assert np.allclose(invert_difference(*difference(x, 2)), x, rtol=0, atol=1e-12)
    ramp = 4.0 + 2.5 * np.arange(20)
    assert np.all(difference(ramp, 1)[0] == 2.5)
    with pytest.raises(DataError):
        difference([1.0, 2.0], 2)


def test_choose_differencing_on_random_walk():
    walk = np.cumsum(np.random.default_rng(3).normal(size=300))
    d, rows = choose_differencing(walk)
    assert d == 1 and rows[-1]["p_value"] <= 0.05


# fitting ----------------------------------------------------------------------

def test_white_noise_closed_form():
    x = np.random.default_rng(1).normal(3.0, 2.0, 120)
    fit = fit_arima(x, ArimaSpec(0, 0, 0))
    assert fit.intercept == x.mean()
    assert fit.sigma2 == pytest.approx(x.var(ddof=0), rel=1e-14)


def test_ar1_recovery():
    assert sum(0.60 <= v <= 0.80 for v in oracles.ar1_estimates()) >= 95


def test_ma1_recovery():
    assert sum(0.35 <= v <= 0.65 for v in oracles.ma1_estimates()) >= 95


def test_fit_needs_enough_points():
    with pytest.raises(DataError):
        fit_arima(np.arange(10.0), ArimaSpec(2, 0, 2))


def test_css_objective_never_increases():
    x = arma_series(300, ar=(0.6,), ma=(0.3,), seed=4)
    fit = fit_arima(x, ArimaSpec(1, 0, 1))
    assert np.all(np.diff(fit.sse_path) <= 1e-9 * fit.sse_path[0])
    assert fit.sse_path[-1] == pytest.approx(fit.sigma2 * fit.n_obs, rel=1e-8)


def test_fit_uses_longest_contiguous_run():
    x = arma_series(200, ar=(0.5,), seed=5)
    gapped = x.copy()
    gapped[30] = np.nan
    a = fit_arima(gapped, ArimaSpec(1, 0, 0))
    b = fit_arima(x[31:], ArimaSpec(1, 0, 0))
    assert a.ar[0] == b.ar[0] and a.n_obs == b.n_obs


def test_ar2_selection():
    assert sum(p >= 2 for p, _ in oracles.selected_orders("ar2", 500, 2)) >= 70


def test_aicc_exceeds_aic():
    x = arma_series(60, ar=(0.4,), seed=6)
    for spec in (ArimaSpec(0, 0, 0), ArimaSpec(1, 0, 1), ArimaSpec(2, 0, 0)):
        fit = fit_arima(x, spec)
        assert fit.aicc > fit.aic


def test_selection_is_deterministic():
    x = arma_series(150, ar=(0.5,), ma=(0.4,), seed=7)
    a, b = select_order(x, 2, 2), select_order(x, 2, 2)
    assert a[0] == b[0] and a[1].aicc == b[1].aicc
    with pytest.raises(ValueError):
        select_order(x, 6, 0)


# forecasting ------------------------------------------------------------------

def test_white_noise_forecast():
    x = np.random.default_rng(8).normal(10.0, 1.5, 80)
    fit = fit_arima(x, ArimaSpec(0, 0, 0))
    fc = forecast(fit, x, 12)
    assert np.all(fc.mean == fit.intercept)
    assert np.all(fc.se == math.sqrt(fit.sigma2))


def test_ar1_forecast_closed_form():
    x = arma_series(200, ar=(0.7,), mean=5.0, seed=9)
    fit = fit_arima(x, ArimaSpec(1, 0, 0))
    mu, phi = fit.intercept, fit.ar[0]
    h = np.arange(1, 21)
    assert np.allclose(forecast(fit, x, 20).mean, mu + phi**h * (x[-1] - mu), rtol=1e-12, atol=0)


def test_band_multiplier():
    assert abs(band_multiplier(0.90) - 1.6449) < 1e-4
    with pytest.raises(ValueError):
        Forecast(np.zeros(2), np.ones(2), level=1.0)


def test_psi_weights_of_random_walk():
    assert np.array_equal(psi_weights([], [], 1, 5), np.ones(5))


def test_forecast_se_monotone():
    ok, tried = oracles.forecast_se_monotone()
    assert ok == tried


# goodness of fit and effect size ------------------------------------------------

def test_gof_exact_match():
    fc = Forecast(np.arange(5.0), np.ones(5))
    res = chi_square_gof(np.arange(5.0), fc)
    assert res.chi2 == 0 and res.p_value == 1 and res.dof == 5


def test_gof_mean_equals_dof():
    gen = np.random.default_rng(10)
    fc = Forecast(np.zeros(66), np.full(66, 2.0))
    chi2 = [chi_square_gof(gen.normal(0.0, 2.0, 66), fc).chi2 for _ in range(1000)]
    assert abs(np.mean(chi2) - 66) < 1.5


def test_gof_threshold_matches_series_oracle():
    dof = 66
    quantile = optimize.brentq(lambda x: chi2_sf_even(x, dof) - 0.001, dof, 10 * dof, xtol=1e-12)
    assert quantile == pytest.approx(stats.chi2.ppf(0.999, dof), rel=1e-9)
    fc = Forecast(np.zeros(dof), np.ones(dof))
    for scale in np.linspace(0.5, 2.0, 61):
        obs = np.full(dof, math.sqrt(scale * quantile / dof))
        res = chi_square_gof(obs, fc)
        assert (res.p_value < 0.001) == (res.chi2 > quantile)
        assert res.p_value == pytest.approx(chi2_sf_even(res.chi2, dof), rel=1e-9)


def test_gof_skips_missing_and_checks_se():
    fc = Forecast(np.zeros(4), np.ones(4))
    assert chi_square_gof([1.0, np.nan, 1.0], fc).dof == 2
    with pytest.raises(DataError):
        chi_square_gof([np.nan], fc)
    with pytest.raises(ValueError):
        chi_square_gof(np.zeros(5), fc)
    with pytest.raises(DegenerateDataError):
        chi_square_gof([1.0], Forecast(np.zeros(1), np.zeros(1)))


def test_percent_change_examples():
    pred = np.linspace(10, 20, 30)
    assert percent_change(pred, pred) == (0.0, 0)
    assert percent_change(0.49 * pred, pred)[0] == pytest.approx(-51.0)
    assert percent_change(1.52 * pred, pred)[0] == pytest.approx(52.0)
    assert percent_change([1.0, 2.0], [1.0, -1.0]) == (0.0, 1)
    assert percent_change([1.0, 3.0], [2.0, 2.0], method="totals")[0] == 0.0
    with pytest.raises(DataError):
        percent_change([1.0], [0.0])


# small measures ----------------------------------------------------------------

def test_cronbach_identical_items():
    col = np.random.default_rng(11).normal(size=50)
    assert cronbach_alpha(np.column_stack([col, col, col])) == pytest.approx(1.0)


def test_cronbach_correlated_pair():
    gen = np.random.default_rng(12)
    x = gen.multivariate_normal([0, 0], [[1, 0.6], [0.6, 1]], size=10**4)
    assert abs(cronbach_alpha(x) - 0.75) < 0.02


def test_cronbach_independent_items():
    assert abs(cronbach_alpha(np.random.default_rng(13).normal(size=(10**4, 4)))) < 0.05


def test_cronbach_errors():
    with pytest.raises(DegenerateDataError):
        cronbach_alpha(np.ones((5, 3)))
    with pytest.raises(DataError):
        cronbach_alpha(np.ones((5, 1)))


def test_topic_share_examples():
    assert reaction_weighted_topic_share([[1.0, 0.0]], [7], [0], topic=0)[0] == 1.0
    rho = reaction_weighted_topic_share([[0.2, 0.8], [0.8, 0.2]], [10, 30], [0, 0], topic=0)
    assert rho[0] == pytest.approx(0.65)
    empty = reaction_weighted_topic_share([[0.5, 0.5]], [0], [1], topic=0)
    assert np.isnan(empty).all()


def test_topic_shares_sum_to_one():
    gen = np.random.default_rng(14)
    w = gen.dirichlet(np.ones(5), size=400)
    n = gen.integers(0, 50, 400)
    wk = gen.integers(0, 20, 400)
    total = sum(reaction_weighted_topic_share(w, n, wk, t, 20) for t in range(5))
    has = np.bincount(wk, weights=n, minlength=20) > 0
    assert np.allclose(total[has], 1.0, atol=1e-12)


# pipeline ---------------------------------------------------------------------

def test_empty_post_segment():
    with pytest.raises(DataError, match="empty"):
        run_its(weekly(np.ones(30)), WeeklySeries(START + dt.timedelta(weeks=30), np.zeros(0)))


def test_post_segment_without_usable_values():
    pre = weekly(np.random.default_rng(15).normal(5, 1, 40))
    with pytest.raises(DataError, match="preprocess"):
        run_its(pre, WeeklySeries(START + dt.timedelta(weeks=40), [0.0, 0.0]), ItsOptions(transform="log"))


def test_dof_counts_non_missing_post_weeks():
    x = planted_series(seed=1)
    x[60], x[70], x[71] = 0.0, np.nan, 0.0
    series = weekly(x, PLANTED_START)
    report = run_its_at(series, planted_policy_date(), ItsOptions(transform="log", max_p=2, max_q=2))
    post = x[52:]
    assert report.gof.dof == int(np.sum(np.isfinite(post) & (post > 0))) == len(post) - 3
    assert sum(row.inside is None for row in report.band) == 3


def test_pipeline_is_deterministic():
    series = weekly(planted_series(seed=2), PLANTED_START)
    opts = ItsOptions(transform="log", max_p=2, max_q=2)
    a = run_its_at(series, planted_policy_date(), opts).to_dict()
    b = run_its_at(series, planted_policy_date(), opts).to_dict()
    assert a == b


def test_pipeline_scale_equivariance():
    x = arma_series(120, ar=(0.5,), mean=100.0, seed=17)
    x[70:] -= 8.0
    opts = ItsOptions(max_p=2, max_q=2)
    date = START + dt.timedelta(weeks=70)
    for c in (0.01, 3.3, 250.0):
        base = run_its_at(weekly(x), date, opts)
        scaled = run_its_at(weekly(c * x), date, opts)
        assert scaled.spec == base.spec
        assert np.allclose(scaled.forecast.mean, c * base.forecast.mean, rtol=1e-9, atol=0)
        assert np.allclose(scaled.forecast.se, c * base.forecast.se, rtol=1e-9, atol=0)
        assert scaled.percent_change == pytest.approx(base.percent_change, rel=1e-9)
        assert scaled.gof.chi2 == pytest.approx(base.gof.chi2, rel=1e-9)


def test_pre_gap_is_bridged():
    x = arma_series(100, ar=(0.4,), mean=20.0, seed=18)
    x[55] = np.nan
    report = run_its(weekly(x[:58]), weekly(x[58:], START + dt.timedelta(weeks=58)), ItsOptions(max_p=1, max_q=1))
    assert report.n_fit == 55 and report.gap == 3
    assert report.forecast.horizon == 3 + 42


def test_policy_date_outside_series():
    with pytest.raises(DataError):
        run_its_at(weekly(np.ones(40)), START - dt.timedelta(weeks=1))
    with pytest.raises(DataError):
        run_its_at(weekly(np.arange(40.0)), START + dt.timedelta(weeks=5))


def test_stage_label_on_failure():
    with pytest.raises(DegenerateDataError, match="stationarity"):
        run_its_at(weekly(np.full(60, 4.0)), START + dt.timedelta(weeks=40))
