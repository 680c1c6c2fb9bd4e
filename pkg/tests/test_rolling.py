"""Rolling backtest harness tests.

Covers the autoregressive benchmark (order selection, exact constant
handling), origin/window arithmetic, look-ahead protection, selection
frequency accounting, failure bookkeeping, and determinism.
"""

import dataclasses

import numpy as np
import pytest

from vsforecast.errors import InsufficientHistoryError
from vsforecast.fredmd import ForecastDataset, lag_stack
from vsforecast.rolling import (
    RollingConfig,
    ar_benchmark,
    frequency_table,
    ratio_table,
    report_csv,
    roll_forecast,
)
from vsforecast.smc import SmcConfig

START_YEAR = 1996


def make_dataset(seed=0, n_months=220, n_series=8, horizon=3, signal_col=0,
                 coef=0.9, noise_sd=0.05, constant_series=False):
    """Synthetic dataset whose h-step target is one lag-0 predictor
    column plus small noise; the one-period series is unrelated."""
    rng = np.random.default_rng(seed)
    panel = rng.standard_normal((n_months, n_series))
    if constant_series:
        panel[:, -1] = 1.0
    x = lag_stack(panel, depth=5)
    y = rng.standard_normal(n_months)
    y_h = coef * panel[:, signal_col] + noise_sd * rng.standard_normal(n_months)
    y_h[-horizon:] = np.nan
    dates = tuple((START_YEAR + t // 12, 1 + t % 12) for t in range(n_months))
    names = tuple(f"S{j}.L{lag}" for j in range(n_series) for lag in range(6))
    return ForecastDataset(
        target="emp", horizon=horizon, strategy=1, dates=dates,
        x=x, y=y, y_h=y_h, column_names=names,
        retained=tuple(f"S{j}" for j in range(n_series)), dropped=(),
        outlier_mask=np.zeros((n_months, n_series), dtype=bool))


def last_test_months(dataset, count):
    return dataset.dates[-count:]


def small_config(dataset, count, methods, **kwargs):
    defaults = dict(window_size=100, validation_length=30,
                    test_months=last_test_months(dataset, count),
                    k_grid=range(0, 5), n_factors=4)
    defaults.update(kwargs)
    return RollingConfig(methods=methods, **defaults)


def ar_trial(seed, kind, n=200, horizon=1):
    rng = np.random.default_rng(seed)
    if kind == "noise":
        y = rng.standard_normal(n)
    else:
        y = np.zeros(n)
        shocks = rng.standard_normal(n)
        for t in range(2, n):
            y[t] = 1.1 * y[t - 1] - 0.3 * y[t - 2] + shocks[t]
    y_h = np.full(n, np.nan)
    y_h[:-horizon] = y[horizon:]
    rows = np.arange(10, n - horizon - 1)
    return ar_benchmark(y, y_h, rows, n - 2, validation_length=48)


class TestArBenchmark:
    def test_constant_series_is_reproduced_exactly(self):
        n = 160
        y = np.full(n, 3.25)
        y_h = np.full(n, 3.25)
        forecast, order = ar_benchmark(y, y_h, np.arange(10, n - 2), n - 1,
                                       validation_length=40)
        assert order == 0
        assert forecast == pytest.approx(3.25, abs=1e-12)

    def test_exact_linear_map_recovered(self):
        rng = np.random.default_rng(5)
        n = 180
        y = rng.standard_normal(n)
        y_h = 2.0 + 0.5 * y
        rows = np.arange(10, n - 2)
        forecast, order = ar_benchmark(y, y_h, rows, n - 1,
                                       validation_length=40)
        assert order == 1
        assert forecast == pytest.approx(2.0 + 0.5 * y[n - 1], abs=1e-8)

    def test_white_noise_prefers_small_orders(self):
        orders = [ar_trial(seed, "noise")[1] for seed in range(50)]
        assert sum(order == 0 for order in orders) >= 15
        assert np.mean(orders) <= 3.0

    def test_ar2_series_gets_positive_order(self):
        orders = [ar_trial(seed, "ar2")[1] for seed in range(50)]
        assert sum(order >= 1 for order in orders) >= 47

    def test_too_few_pairs_raises(self):
        y = np.random.default_rng(0).standard_normal(60)
        y_h = y.copy()
        with pytest.raises(InsufficientHistoryError):
            ar_benchmark(y, y_h, np.arange(10, 40), 59, validation_length=48)


class TestRollForecast:
    def test_ar_ratio_is_exactly_one(self):
        dataset = make_dataset(seed=1)
        config = small_config(dataset, 8, ("ar",))
        report = roll_forecast(dataset, config)
        assert report.ratio_to_ar["ar"] == 1.0

    def test_planted_signal_beats_benchmark(self):
        dataset = make_dataset(seed=2)
        config = small_config(dataset, 24, ("ar", "fs", "iht", "adalasso"))
        report = roll_forecast(dataset, config)
        for method in ("fs", "iht", "adalasso"):
            assert report.failures[method] == 0
            assert report.ratio_to_ar[method] < 1.0
        # the planted lag-0 column should be picked almost every window
        for method in ("fs", "iht"):
            assert report.frequency[method].get("S0.L0", 0) >= 20
        top = report.frequent_predictors("fs", threshold=12)
        assert "S0.L0" in top

    def test_window_pair_counts(self):
        dataset = make_dataset(seed=3, horizon=4)
        config = small_config(dataset, 6, ("ar", "fs"))
        report = roll_forecast(dataset, config)
        assert np.all(report.train_counts == config.window_size - 4)

    def test_origin_row_mapping(self):
        # y_h equal to the row index makes realized values reveal which
        # origin row each test month resolved to
        dataset = make_dataset(seed=4, horizon=3)
        y_h = np.arange(dataset.n_rows, dtype=float)
        y_h[-3:] = np.nan
        dataset = dataclasses.replace(dataset, y_h=y_h)
        month = dataset.dates[210]
        config = small_config(dataset, 4, ("ar",), test_months=(month,))
        report = roll_forecast(dataset, config)
        assert report.realized[0] == 210 - 3

    def test_missing_origin_raises(self):
        dataset = make_dataset(seed=5)
        config = small_config(dataset, 4, ("ar",),
                              test_months=((2030, 1),))
        with pytest.raises(InsufficientHistoryError):
            roll_forecast(dataset, config)

    def test_window_before_data_raises(self):
        dataset = make_dataset(seed=5)
        config = small_config(dataset, 4, ("ar",),
                              test_months=(dataset.dates[40],))
        with pytest.raises(InsufficientHistoryError):
            roll_forecast(dataset, config)

    def test_constant_column_is_dropped_not_fatal(self):
        dataset = make_dataset(seed=6, constant_series=True)
        config = small_config(dataset, 6, ("fs", "iht"))
        report = roll_forecast(dataset, config)
        for method in ("fs", "iht"):
            assert report.failures[method] == 0
            chosen = set(report.frequency[method])
            assert not any(name.startswith("S7.") for name in chosen)

    def test_no_lookahead(self):
        dataset = make_dataset(seed=7)
        config = small_config(dataset, 6, ("ar", "fs", "fa"))
        base = roll_forecast(dataset, config)

        last_origin = 219 - 3
        y_h = dataset.y_h.copy()
        # poison every target the origins could not have observed,
        # including the realized test outcomes themselves
        y_h[last_origin - 3 + 1:] = 99.0
        x = dataset.x.copy()
        x[last_origin + 1:] += 5.0
        poisoned = dataclasses.replace(dataset, y_h=y_h, x=x)
        poked = roll_forecast(poisoned, config)

        for method in config.methods:
            np.testing.assert_array_equal(base.forecasts[method],
                                          poked.forecasts[method])

    def test_failures_recorded_and_excluded(self):
        # backward elimination needs more rows than columns; give it fewer
        dataset = make_dataset(seed=8, n_series=20)
        config = small_config(dataset, 5, ("ar", "be"))
        report = roll_forecast(dataset, config)
        assert report.failures["be"] == 5
        assert np.all(np.isnan(report.forecasts["be"]))
        assert np.isnan(report.mspe["be"])
        assert np.isfinite(report.mspe["ar"])

    def test_smc_warm_start_chain_runs_and_is_deterministic(self):
        dataset = make_dataset(seed=9)
        smc_config = SmcConfig(n_particles=60, seed=11)
        config = small_config(dataset, 3, ("smc",), k_grid=(0, 1, 2),
                              smc_config=smc_config)
        first = roll_forecast(dataset, config)
        second = roll_forecast(dataset, config)
        np.testing.assert_array_equal(first.forecasts["smc"],
                                      second.forecasts["smc"])
        assert first.failures["smc"] == 0
        assert np.all(np.isfinite(first.forecasts["smc"]))
        assert first.frequency["smc"].get("S0.L0", 0) >= 2

    def test_fa_method_produces_finite_forecasts(self):
        dataset = make_dataset(seed=10)
        config = small_config(dataset, 4, ("ar", "fa"))
        report = roll_forecast(dataset, config)
        assert report.failures["fa"] == 0
        assert np.all(np.isfinite(report.forecasts["fa"]))
        assert np.isfinite(report.ratio_to_ar["fa"])

    def test_determinism_across_runs(self):
        dataset = make_dataset(seed=11)
        config = small_config(dataset, 5, ("ar", "fs", "adalasso"))
        first = roll_forecast(dataset, config)
        second = roll_forecast(dataset, config)
        for method in config.methods:
            np.testing.assert_array_equal(first.forecasts[method],
                                          second.forecasts[method])


@pytest.fixture(scope="module")
def report():
    dataset = make_dataset(seed=12)
    config = small_config(dataset, 6, ("ar", "fs"))
    return roll_forecast(dataset, config)


class TestReportFormats:
    def test_csv_shape(self, report):
        lines = report_csv(report).strip().split("\n")
        assert lines[0] == "month,realized,ar,fs"
        assert len(lines) == 1 + 6

    def test_ratio_table_bolds_best(self, report):
        table = ratio_table([report])
        assert "| method | h=3 |" in table
        assert "**" in table

    def test_frequency_table_respects_threshold(self, report):
        table = frequency_table(report)
        for line in table.splitlines()[2:]:
            count = int(line.strip("|").split("|")[-1])
            assert count >= report.frequency_threshold

    def test_config_rejects_unknown_method(self):
        with pytest.raises(ValueError):
            RollingConfig(methods=("fs", "nonsense"))

    def test_config_rejects_tiny_window(self):
        with pytest.raises(ValueError):
            RollingConfig(window_size=50, validation_length=48)
