"""Tests for factor extraction, EM imputation, and factor forecasting."""

import math

import numpy as np
import pytest

from vsforecast.errors import InsufficientHistoryError, TooSparseColumnError
from vsforecast.factors import (
    FactorForecast,
    extract_factors,
    fit_factor_forecast,
    project_factors,
)
from vsforecast.linalg import principal_components
from vsforecast.util import derive_rng


def factor_panel(seed, t=120, n=25, s=3, noise=0.3, persistence=0.0):
    """Panel driven by s latent factors plus idiosyncratic noise. With
    persistence > 0 the factors follow an AR(1), so lagged factor scores
    carry information about future values."""
    rng = derive_rng(seed, "factor-panel")
    shocks = rng.standard_normal((t, s))
    if persistence:
        f = np.zeros((t, s))
        f[0] = shocks[0]
        for i in range(1, t):
            f[i] = persistence * f[i - 1] + math.sqrt(1 - persistence ** 2) * shocks[i]
    else:
        f = shocks
    lam = rng.standard_normal((n, s))
    z = f @ lam.T + noise * rng.standard_normal((t, n))
    return z, f, lam


def test_complete_panel_matches_principal_components():
    z, _, _ = factor_panel(1)
    extraction = extract_factors(z, 3)
    assert extraction.em_converged
    assert extraction.n_iterations == 0
    means = z.mean(axis=0)
    sds = z.std(axis=0, ddof=1)
    standardized = (z - means) / sds
    pca = principal_components(standardized, 3)
    assert np.allclose(extraction.factors, pca.scores, atol=1e-12)
    assert np.allclose(extraction.loadings, pca.loadings, atol=1e-12)
    assert np.allclose(extraction.eigenvalues, pca.eigenvalues, atol=1e-10)


def test_factor_normalization():
    z, _, _ = factor_panel(2)
    extraction = extract_factors(z, 4)
    t = z.shape[0]
    gram = extraction.factors.T @ extraction.factors
    assert np.allclose(gram, t * np.eye(4), atol=1e-8)


def test_projection_recovers_in_sample_scores():
    z, _, _ = factor_panel(3)
    extraction = extract_factors(z, 3)
    projected = project_factors(extraction, z)
    assert np.allclose(projected, extraction.factors, atol=1e-8)


def test_projection_out_of_sample_tracks_truth():
    z, f, lam = factor_panel(4, t=200, n=40, noise=0.1)
    extraction = extract_factors(z[:150], 3)
    projected = project_factors(extraction, z[150:])
    # factors are identified up to rotation; compare through predictions
    reconstruction = projected @ extraction.loadings.T
    standardized = (z[150:] - extraction.column_means) / extraction.column_sds
    residual = standardized - reconstruction
    assert np.mean(residual ** 2) < 0.2 * np.mean(standardized ** 2)


def test_projection_with_missing_entries():
    z, _, _ = factor_panel(5, t=150, n=30, noise=0.1)
    extraction = extract_factors(z[:120], 3)
    row = z[130].copy()
    full = project_factors(extraction, row)[0]
    row_missing = row.copy()
    row_missing[::4] = np.nan
    partial = project_factors(extraction, row_missing)[0]
    assert np.all(np.isfinite(partial))
    assert np.linalg.norm(partial - full) < 0.5 * np.linalg.norm(full) + 0.5
    empty = project_factors(extraction, np.full(30, np.nan))[0]
    assert np.all(np.isnan(empty))


def test_em_recovers_masked_entries():
    z, f, lam = factor_panel(6, t=150, n=30, noise=0.05)
    rng = derive_rng(6, "mask")
    mask = rng.random(z.shape) < 0.15
    z_missing = z.copy()
    z_missing[mask] = np.nan
    extraction = extract_factors(z_missing, 3)
    assert extraction.em_converged
    # compare imputed cells against the standardized truth
    standardized_truth = (z - extraction.column_means) / extraction.column_sds
    imputed = extraction.filled[mask]
    truth = standardized_truth[mask]
    correlation = np.corrcoef(imputed, truth)[0, 1]
    assert correlation > 0.95
    assert np.sqrt(np.mean((imputed - truth) ** 2)) < 0.35


def test_em_improves_on_zero_fill():
    z, _, _ = factor_panel(7, t=100, n=20, noise=0.2)
    rng = derive_rng(7, "mask2")
    mask = rng.random(z.shape) < 0.2
    z_missing = z.copy()
    z_missing[mask] = np.nan
    extraction = extract_factors(z_missing, 3)
    standardized_truth = ((z - extraction.column_means)
                          / extraction.column_sds)[mask]
    em_error = np.mean((extraction.filled[mask] - standardized_truth) ** 2)
    zero_error = np.mean(standardized_truth ** 2)
    assert em_error < 0.5 * zero_error


def test_em_iteration_cap_reports_nonconvergence():
    z, _, _ = factor_panel(8)
    rng = derive_rng(8, "mask3")
    mask = rng.random(z.shape) < 0.1
    z_missing = z.copy()
    z_missing[mask] = np.nan
    extraction = extract_factors(z_missing, 2, tol=0.0, max_iterations=3)
    assert not extraction.em_converged
    assert extraction.n_iterations == 3


def test_too_sparse_column_rejected():
    z, _, _ = factor_panel(9, t=100)
    z = z.copy()
    z[:80, 5] = np.nan
    with pytest.raises(TooSparseColumnError) as excinfo:
        extract_factors(z, 2)
    assert excinfo.value.column == 5


def test_forecast_reduces_to_autoregression():
    """With the factor dimension pinned to zero the fit is OLS of the
    target on its own lags."""
    rng = derive_rng(11, "fa-ar")
    t = 160
    y = np.zeros(t)
    e = rng.standard_normal(t)
    for i in range(1, t):
        y[i] = 0.7 * y[i - 1] + e[i]
    target = np.concatenate([y[1:], [np.nan]])  # one-step target by origin
    factors = rng.standard_normal((t, 4))
    model = fit_factor_forecast(factors, y, target,
                                n_factors_grid=[0], y_lag_grid=[1],
                                selection="bic")
    assert model.n_factors == 0
    assert model.n_y_lags == 1
    # with single-lag grids the burn-in is zero: rows 0 .. t-2 are used
    x = y[:t - 1]
    yy = target[:t - 1]
    slope = np.cov(x, yy, ddof=1)[0, 1] / np.var(x, ddof=1)
    assert model.y_coefficients[0] == pytest.approx(slope, abs=1e-8)


def test_forecast_finds_factor_signal():
    z, f, lam = factor_panel(12, t=200, n=40, s=2, noise=0.2, persistence=0.9)
    rng = derive_rng(12, "fa-signal")
    y = 1.5 * f[:, 0] + 0.2 * rng.standard_normal(200)
    target = np.concatenate([y[1:], [np.nan]])
    extraction = extract_factors(z, 4)
    model = fit_factor_forecast(extraction.factors, y, target,
                                n_factors_grid=range(0, 4),
                                y_lag_grid=range(0, 3),
                                factor_lag_grid=range(1, 3),
                                selection="bic")
    assert model.n_factors >= 1
    # prediction quality on the fitted window beats the mean forecast
    rows = np.arange(6, 199)
    preds = np.array([
        model.predict(extraction.factors[r::-1], y[r::-1]) for r in rows])
    sse = np.sum((target[rows] - preds) ** 2)
    sst = np.sum((target[rows] - target[rows].mean()) ** 2)
    assert sse < 0.5 * sst


def test_forecast_noise_target_prefers_small_models():
    small = 0
    seeds = 10
    for seed in range(seeds):
        rng = derive_rng(seed, "fa-noise")
        t = 150
        factors = rng.standard_normal((t, 3))
        y = rng.standard_normal(t)
        target = np.concatenate([y[1:], [np.nan]])
        model = fit_factor_forecast(factors, y, target,
                                    n_factors_grid=range(0, 3),
                                    y_lag_grid=range(0, 3),
                                    factor_lag_grid=range(1, 3),
                                    selection="bic")
        if model.n_y_lags + model.n_factors * model.n_factor_lags <= 1:
            small += 1
    assert small >= 8


def test_forecast_fcv_selection_and_scores():
    z, f, _ = factor_panel(13, t=180, n=30, s=2, noise=0.2, persistence=0.9)
    rng = derive_rng(13, "fa-fcv")
    y = f[:, 0] + 0.3 * rng.standard_normal(180)
    target = np.concatenate([y[2:], [np.nan, np.nan]])
    extraction = extract_factors(z, 3)
    model = fit_factor_forecast(extraction.factors, y, target,
                                n_factors_grid=range(0, 3),
                                y_lag_grid=range(0, 2),
                                factor_lag_grid=range(1, 3),
                                selection="fcv", validation_length=40)
    assert model.n_factors >= 1
    assert min(model.scores.values()) == model.scores[
        (model.n_factors, model.n_y_lags, model.n_factor_lags)]


def test_forecast_predict_arithmetic():
    model = FactorForecast(
        n_factors=2, n_y_lags=1, n_factor_lags=2, intercept=0.5,
        y_coefficients=np.array([2.0]),
        factor_coefficients=np.array([[1.0, -1.0], [0.5, 0.25]]),
        score=0.0, scores={})
    factor_rows = np.array([[1.0, 2.0, 9.9], [3.0, 4.0, 9.9]])
    y_rows = np.array([10.0, 99.0])
    got = model.predict(factor_rows, y_rows)
    expected = 0.5 + 2.0 * 10.0 + (1.0 * 1.0 - 1.0 * 2.0) + (0.5 * 3.0 + 0.25 * 4.0)
    assert got == pytest.approx(expected, abs=1e-12)


def test_forecast_insufficient_history():
    rng = derive_rng(14, "fa-short")
    factors = rng.standard_normal((20, 2))
    y = rng.standard_normal(20)
    target = np.concatenate([y[1:], [np.nan]])
    with pytest.raises(InsufficientHistoryError):
        fit_factor_forecast(factors, y, target, min_obs=30)
