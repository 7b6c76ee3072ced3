"""Interrupted-time-series analysis."""
from .arima import (ArimaFit, ArimaFitError, ArimaSpec, Forecast, GofResult, SelectionError, band_multiplier,
                    chi_square_gof, fit_arima, forecast, percent_change, psi_weights, select_order,
                    simulate_continuation)
from .measures import cronbach_alpha, reaction_weighted_topic_share
from .pipeline import BandRow, ItsOptions, ItsReport, choose_differencing, run_its, run_its_at
from .series import TRANSFORMS, WeeklySeries, inverse, normalize_by_venue_count, preprocess
from .stationarity import adf_pvalue, adf_test, critical_values, difference, invert_difference

__all__ = [
    "ArimaFit", "ArimaFitError", "ArimaSpec", "BandRow", "Forecast", "GofResult", "ItsOptions", "ItsReport",
    "SelectionError", "TRANSFORMS", "WeeklySeries", "adf_pvalue", "adf_test", "band_multiplier",
    "choose_differencing", "chi_square_gof", "critical_values", "cronbach_alpha", "difference", "fit_arima",
    "forecast", "inverse", "invert_difference", "normalize_by_venue_count", "percent_change", "preprocess",
    "psi_weights", "reaction_weighted_topic_share", "run_its", "run_its_at", "select_order",
    "simulate_continuation",
]
