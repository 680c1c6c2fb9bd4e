"""Rolling-window backtesting over a forecast dataset.

For each test month the harness steps back h months to the forecast
origin, takes the trailing fixed-length window, masks every target pair
the origin could not yet observe, tunes each method on the trailing
validation block by forward cross-validation, refits on the full
window, and emits one forecast. Methods covered: a direct-projection
autoregressive benchmark, every subset solver, the adaptive lasso, and
the factor regression. Reports carry squared-error ratios against the
benchmark and how often each predictor column was selected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    InsufficientHistoryError,
    RankDeficientError,
    VsForecastError,
)
from .factors import extract_factors, fit_factor_forecast
from .fredmd import ForecastDataset, month_number
from .greedy import SubsetModel
from .linalg import RegressionProblem, solve_ols, standardize_columns, subset_rows
from .methods import MethodPlan, make_plan, refit_finalizer, select_model
from .selection import SelectionPlan, forward_cv_select
from .smc import SmcConfig, smc_best_subset
from .util import derive_rng, format_float, markdown_table

AR_MAX_ORDER = 6
DEFAULT_TEST_MONTHS = tuple(
    (year, month) for year in range(2015, 2019) for month in range(1, 13))
VS_METHODS = ("fs", "be", "iht", "htp", "cosamp", "sp", "smc", "adalasso")


def default_rolling_k_grid() -> range:
    return range(0, 26)


@dataclass(frozen=True)
class RollingConfig:
    """Backtest protocol: window geometry, methods, tuning, seeds."""

    methods: tuple[str, ...] = ("ar", "fs", "iht", "htp", "adalasso", "fa", "smc")
    window_size: int = 240
    validation_length: int = 48
    test_months: tuple[tuple[int, int], ...] = DEFAULT_TEST_MONTHS
    k_grid: tuple[int, ...] | None = None
    n_factors: int = 8
    smc_config: SmcConfig | None = None
    seed: int = 0
    min_frequency: int = 12

    def __post_init__(self):
        if self.window_size <= self.validation_length + 30:
            raise ValueError("window must exceed validation block plus 30 rows")
        unknown = [m for m in self.methods
                   if m not in VS_METHODS and m not in ("ar", "fa")]
        if unknown:
            raise ValueError(f"unknown methods {unknown}")


@dataclass
class RollingReport:
    """Forecasts, errors, and selection counts for one (target, horizon)."""

    target: str
    horizon: int
    test_months: tuple[tuple[int, int], ...]
    realized: np.ndarray
    forecasts: dict[str, np.ndarray]
    mspe: dict[str, float]
    ratio_to_ar: dict[str, float]
    failures: dict[str, int]
    frequency: dict[str, dict[str, int]]
    train_counts: np.ndarray
    sizes: dict[str, float] = field(default_factory=dict)
    frequency_threshold: int = 12

    def frequent_predictors(self, method: str,
                            threshold: int | None = None) -> dict[str, int]:
        """Selection counts at or above the reporting threshold."""
        threshold = self.frequency_threshold if threshold is None else threshold
        counts = self.frequency.get(method, {})
        return {name: count for name, count in sorted(
            counts.items(), key=lambda item: (-item[1], item[0]))
            if count >= threshold}


def ar_design(y: np.ndarray, rows: np.ndarray,
              max_order: int = AR_MAX_ORDER) -> np.ndarray:
    """Lag matrix of the one-period series: column l holds y at lag l."""
    return np.column_stack([y[rows - lag] for lag in range(max_order)])


def ar_benchmark(y: np.ndarray, y_target: np.ndarray, rows: np.ndarray,
                 origin: int, validation_length: int,
                 max_order: int = AR_MAX_ORDER) -> tuple[float, int]:
    """Direct-projection autoregressive forecast from one origin.

    Candidate orders 0..max_order regress the origin-dated h-step target
    on that many recent values of the one-period series; order 0 is the
    window mean. The order is tuned on the trailing validation block and
    the winner refit on all usable pairs.
    """
    rows = np.asarray(rows, dtype=np.intp)
    usable = rows[(rows >= max_order - 1)
                  & np.isfinite(y_target[rows])]
    design = ar_design(y, usable, max_order)
    finite = np.all(np.isfinite(design), axis=1)
    usable = usable[finite]
    design = design[finite]
    if usable.size < validation_length + 10:
        raise InsufficientHistoryError(
            f"{usable.size} autoregression pairs is too few")
    problem = RegressionProblem(design, y_target[usable], standardized=False)
    candidates = tuple(range(max_order + 1))

    def fit_orders(problem_):
        fits = {}
        for order in candidates:
            support = tuple(range(order))
            try:
                state = solve_ols(problem_, support)
            except RankDeficientError:
                continue
            dense = np.zeros(problem_.n_cols)
            dense[list(support)] = state.coefficients
            fits[order] = (state.intercept, dense)
        return fits

    report = forward_cv_select(problem, fit_orders, candidates,
                               validation_length)
    intercept, dense = report.fit
    recent = np.array([y[origin - lag] for lag in range(max_order)])
    return float(intercept + dense @ recent), int(report.chosen)


def _factor_forecast(dataset: ForecastDataset, window: np.ndarray,
                     origin_position: int,
                     config: RollingConfig) -> tuple[float, int]:
    """Extract window factors, tune (d, q, m) by FCV, forecast the origin."""
    z = dataset.x[window][:, ::6]
    y = dataset.y[window]
    target = dataset.y_h[window].copy()
    target[origin_position - dataset.horizon + 1:] = np.nan
    extraction = extract_factors(z, config.n_factors)
    model = fit_factor_forecast(extraction.factors, y, target,
                                selection="fcv",
                                validation_length=config.validation_length)
    recent = slice(origin_position, origin_position - 7, -1)
    forecast = float(model.predict(extraction.factors[recent], y[recent]))
    return forecast, model.n_factors * model.n_factor_lags + model.n_y_lags


def _hint_model(support: tuple[int, ...]) -> SubsetModel:
    return SubsetModel(tuple(support), 0.0, {}, np.inf, 0.0, "smc")


def _smc_plan_rolling(problem, k_grid, config: RollingConfig, origin: int,
                      hints: dict[int, tuple[int, ...]], collected: dict):
    """Tempering-sampler path fitter that warm starts each subset size
    from the previous origin's winner at that size when its columns are
    still present, falling back to the within-window ascending chain."""
    smc_config = config.smc_config or SmcConfig(seed=config.seed)
    full_rows = problem.n_rows
    grid = tuple(sorted(set(int(k) for k in k_grid)))

    def fit_path(problem_):
        out = {}
        previous = None
        for k in grid:
            if k == 0:
                out[0] = (float(problem_.y_mean), np.zeros(problem_.n_cols))
                continue
            if k >= problem_.n_rows:
                continue
            warm = previous
            hint = hints.get(k)
            if hint is not None and all(j < problem_.n_cols for j in hint):
                warm = _hint_model(hint)
            rng = derive_rng(smc_config.seed, "roll", origin,
                             problem_.n_rows, k)
            model, _ = smc_best_subset(problem_, k, smc_config,
                                       warm_start=warm, rng=rng)
            previous = model
            if problem_.n_rows == full_rows:
                collected[k] = model.support
            out[k] = (model.intercept, model.coefficient_vector(problem_.n_cols))
        return out

    return MethodPlan("smc", grid, fit_path, refit_finalizer("smc"))


def roll_forecast(dataset: ForecastDataset,
                  config: RollingConfig) -> RollingReport:
    """Run the rolling backtest and assemble the report."""
    h = dataset.horizon
    month_to_row = {month_number(d): i for i, d in enumerate(dataset.dates)}
    origins = []
    for month in config.test_months:
        row = month_to_row.get(month_number(month) - h)
        if row is None:
            raise InsufficientHistoryError(
                f"no origin row {h} months before {month}")
        if row < config.window_size - 1:
            raise InsufficientHistoryError(
                f"origin for {month} starts before the data")
        origins.append(row)
    origins = np.asarray(origins, dtype=np.intp)
    realized = dataset.y_h[origins]
    if not np.all(np.isfinite(realized)):
        raise InsufficientHistoryError("a test month's outcome is missing")

    n = origins.size
    forecasts = {m: np.full(n, np.nan) for m in config.methods}
    failures = {m: 0 for m in config.methods}
    frequency: dict[str, dict[str, int]] = {m: {} for m in config.methods
                                            if m in VS_METHODS}
    size_totals = {m: [] for m in config.methods}
    train_counts = np.zeros(n, dtype=int)
    k_grid = tuple(config.k_grid) if config.k_grid is not None \
        else tuple(default_rolling_k_grid())
    selection = SelectionPlan(kind="fcv",
                              validation_length=config.validation_length)
    smc_hints: dict[int, tuple[int, ...]] = {}

    for index, origin in enumerate(origins):
        window = np.arange(origin - config.window_size + 1, origin + 1)
        # pairs the origin has actually observed: targets dated o-h or before
        pair_rows = window[window <= origin - h]
        pair_rows = pair_rows[np.isfinite(dataset.y_h[pair_rows])
                              & np.all(np.isfinite(dataset.x[pair_rows]), axis=1)]
        if pair_rows.size <= config.validation_length + 10:
            raise InsufficientHistoryError(
                f"{pair_rows.size} training pairs at origin row {origin}")
        train_counts[index] = pair_rows.size

        x_train = dataset.x[pair_rows]
        keep = np.flatnonzero(x_train.std(axis=0, ddof=1) > 0)
        problem, means, sds = standardize_columns(
            x_train[:, keep], dataset.y_h[pair_rows])
        origin_x = (dataset.x[origin, keep] - means) / sds
        local_of = {int(col): i for i, col in enumerate(keep)}

        smc_collected: dict[int, tuple[int, ...]] = {}
        for method in config.methods:
            try:
                if method == "ar":
                    forecast, order = ar_benchmark(
                        dataset.y, dataset.y_h, pair_rows, origin,
                        config.validation_length)
                    forecasts[method][index] = forecast
                    size_totals[method].append(order)
                    continue
                if method == "fa":
                    forecast, fa_size = _factor_forecast(
                        dataset, window, config.window_size - 1, config)
                    forecasts[method][index] = forecast
                    size_totals[method].append(fa_size)
                    continue
                if method == "smc":
                    hints_local = {}
                    for k, support in smc_hints.items():
                        mapped = tuple(local_of[j] for j in support
                                       if j in local_of)
                        if len(mapped) == len(support):
                            hints_local[k] = mapped
                    plan = _smc_plan_rolling(problem, k_grid, config,
                                             int(origin), hints_local,
                                             smc_collected)
                elif method == "adalasso":
                    split = problem.n_rows - config.validation_length
                    fit_block = subset_rows(problem, np.arange(split))
                    plan = make_plan("adalasso", problem,
                                     seed=config.seed,
                                     weight_problem=fit_block)
                else:
                    plan = make_plan(method, problem, k_grid=k_grid,
                                     seed=config.seed)
                model, _ = select_model(problem, plan, selection)
                forecasts[method][index] = float(model.predict(origin_x[None, :])[0])
                size_totals[method].append(model.k)
                counts = frequency[method]
                for j in model.support:
                    name = dataset.column_names[keep[j]]
                    counts[name] = counts.get(name, 0) + 1
            except VsForecastError:
                failures[method] += 1
        if smc_collected:
            smc_hints = {k: tuple(int(keep[j]) for j in support)
                         for k, support in smc_collected.items()}

    mspe = {}
    ratio = {}
    ar_errors = None
    if "ar" in config.methods:
        ar_errors = (forecasts["ar"] - realized) ** 2
    for method in config.methods:
        errors = (forecasts[method] - realized) ** 2
        ok = np.isfinite(errors)
        mspe[method] = float(errors[ok].mean()) if ok.any() else np.nan
        if ar_errors is not None:
            both = ok & np.isfinite(ar_errors)
            if both.any():
                ratio[method] = float(errors[both].mean()
                                      / ar_errors[both].mean())
            else:
                ratio[method] = np.nan
    sizes = {m: float(np.mean(v)) if v else np.nan
             for m, v in size_totals.items()}
    return RollingReport(dataset.target, h, tuple(config.test_months),
                         realized, forecasts, mspe, ratio, failures,
                         frequency, train_counts, sizes,
                         frequency_threshold=config.min_frequency)


def ratio_table(reports: Sequence[RollingReport],
                tolerance: float = 1.05) -> str:
    """Markdown table of benchmark-relative errors, methods by horizons.

    Within each horizon column, every ratio within `tolerance` of the
    smallest is bolded.
    """
    if not reports:
        return ""
    methods = list(reports[0].forecasts.keys())
    headers = ["method"] + [f"h={r.horizon}" for r in reports]
    cells = []
    bold = []
    for method in methods:
        row = [method]
        marks = [False]
        for report in reports:
            value = report.ratio_to_ar.get(method, np.nan)
            row.append(format_float(value, 3))
            marks.append(False)
        cells.append(row)
        bold.append(marks)
    for col, report in enumerate(reports, start=1):
        values = [report.ratio_to_ar.get(m, np.nan) for m in methods]
        finite = [v for v in values if np.isfinite(v)]
        if not finite:
            continue
        best = min(finite)
        for i, v in enumerate(values):
            if np.isfinite(v) and v <= tolerance * best:
                bold[i][col] = True
    return markdown_table(headers, cells, bold)


def frequency_table(report: RollingReport) -> str:
    """Markdown table of predictors selected at least the threshold
    number of times, per method."""
    headers = ["method", "predictor", "count"]
    rows = []
    for method in sorted(report.frequency):
        for name, count in report.frequent_predictors(method).items():
            rows.append([method, name, str(count)])
    return markdown_table(headers, rows)


def report_csv(report: RollingReport) -> str:
    """Per-origin forecasts and realized values as CSV text."""
    methods = list(report.forecasts.keys())
    lines = ["month,realized," + ",".join(methods)]
    for i, (year, month) in enumerate(report.test_months):
        cells = [f"{year}-{month:02d}", format_float(float(report.realized[i]))]
        cells += [format_float(float(report.forecasts[m][i])) for m in methods]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
