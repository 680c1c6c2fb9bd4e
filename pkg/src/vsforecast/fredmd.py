"""Monthly macro panel ingestion and forecast-dataset assembly.

Covers the standard layout of the St. Louis Fed monthly database files:
a header row naming the series, a transform-code row prescribing the
per-series stationarity transform, then one row per month. From a
parsed table the module builds direct-forecast datasets: a lag-stacked
predictor block, the one-period growth series of the chosen target, and
the h-step-ahead target aligned to its forecast origin.

Outlier policy follows the dataset's convention: a point is an outlier
when it sits more than ten interquartile ranges from the series median.
Contaminated series are either dropped wholesale (strategy 1) or have
the flagged points replaced by a local-level smoother (strategy 2).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import (
    MissingTransformRowError,
    NonMonotoneDatesError,
    NonPositiveForLogError,
    TargetMissingError,
    UnparseableCellError,
)

TARGET_SERIES = {"emp": "PAYEMS", "ip": "INDPRO", "cpi": "CPIAUCSL"}
ANNUALIZER = 1200.0
LAG_DEPTH = 5
OUTLIER_MULTIPLE = 10.0
IQR_FLOOR = 1e-8
MISSING_TOKENS = {"", "na", "nan", "n/a", "null", "."}


@dataclass(frozen=True)
class FredmdTable:
    """Parsed monthly panel: dates, per-series values, transform codes."""

    dates: tuple[tuple[int, int], ...]
    names: tuple[str, ...]
    tcodes: tuple[int, ...]
    values: np.ndarray

    @property
    def n_months(self) -> int:
        return self.values.shape[0]

    @property
    def n_series(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def tcode(self, name: str) -> int:
        return self.tcodes[self.names.index(name)]


def month_number(date: tuple[int, int]) -> int:
    year, month = date
    return year * 12 + (month - 1)


def _parse_date(token: str, row: int):
    token = token.strip()
    try:
        if "/" in token:
            month, _, year = token.split("/")
            return int(year), int(month)
        if ":" in token:
            year, month = token.split(":")
            return int(year), int(month)
        if "m" in token.lower():
            year, month = token.lower().split("m")
            return int(year), int(month)
    except ValueError:
        pass
    raise UnparseableCellError(row, 0, f"cannot read date {token!r}")


def _parse_cell(token: str, row: int, col: int) -> float:
    token = token.strip()
    if token.lower() in MISSING_TOKENS:
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise UnparseableCellError(row, col) from None


def parse_fredmd(text: str | bytes) -> FredmdTable:
    """Read the two-header CSV layout into a table."""
    if isinstance(text, bytes):
        text = text.decode("utf-8-sig")
    rows = [row for row in csv.reader(io.StringIO(text))
            if any(cell.strip() for cell in row)]
    if len(rows) < 3:
        raise MissingTransformRowError("file has no transform row or no data")
    header = [cell.strip() for cell in rows[0]]
    while header and not header[-1]:
        header.pop()
    names = tuple(header[1:])
    if not names:
        raise MissingTransformRowError("header names no series")

    transform = [cell.strip() for cell in rows[1]]
    if not transform or not transform[0].lower().startswith("transform"):
        raise MissingTransformRowError("second row must carry transform codes")
    codes = [cell for cell in transform[1:] if cell][:len(header) - 1]
    if len(codes) != len(names):
        raise MissingTransformRowError(
            f"{len(names)} series but {len(codes)} transform codes")
    tcodes = []
    for col, code in enumerate(codes):
        try:
            value = int(float(code))
        except ValueError:
            raise UnparseableCellError(1, col + 1,
                                       f"bad transform code {code!r}") from None
        if not 1 <= value <= 7:
            raise UnparseableCellError(1, col + 1,
                                       f"transform code {value} outside 1..7")
        tcodes.append(value)

    dates = []
    values = np.full((len(rows) - 2, len(names)), np.nan)
    for i, row in enumerate(rows[2:]):
        dates.append(_parse_date(row[0], i + 2))
        for j in range(len(names)):
            token = row[j + 1] if j + 1 < len(row) else ""
            values[i, j] = _parse_cell(token, i + 2, j + 1)

    numbers = [month_number(d) for d in dates]
    steps = np.diff(numbers)
    if steps.size and np.any(steps != 1):
        where = int(np.flatnonzero(steps != 1)[0]) + 1
        raise NonMonotoneDatesError(
            f"dates break monthly order at row {where + 2}")
    return FredmdTable(tuple(dates), names, tuple(tcodes), values)


def serialize_fredmd(table: FredmdTable) -> str:
    """Write the table back in the two-header CSV layout."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["sasdate", *table.names])
    writer.writerow(["Transform:", *[str(c) for c in table.tcodes]])
    for (year, month), row in zip(table.dates, table.values):
        cells = ["" if not np.isfinite(v) else repr(float(v)) for v in row]
        writer.writerow([f"{month}/1/{year}", *cells])
    return out.getvalue()


def apply_transform(series, tcode: int, series_id: str = "series") -> np.ndarray:
    """Stationarity transform by code, length preserved.

    1 level, 2 first difference, 3 second difference, 4 log, 5 log first
    difference, 6 log second difference, 7 first difference of the simple
    growth rate. Leading observations consumed by differencing come back
    as NaN; NaN inputs propagate.
    """
    x = np.asarray(series, dtype=np.float64)
    if tcode not in range(1, 8):
        raise ValueError(f"transform code must be 1..7, got {tcode}")
    if tcode >= 4:
        bad = np.flatnonzero(np.isfinite(x) & (x <= 0))
        if bad.size:
            raise NonPositiveForLogError(series_id, int(bad[0]))
    out = np.full(x.size, np.nan)
    if tcode == 1:
        return x.copy()
    if tcode == 2:
        out[1:] = np.diff(x)
        return out
    if tcode == 3:
        out[2:] = np.diff(x, 2)
        return out
    with np.errstate(invalid="ignore"):
        if tcode in (4, 5, 6):
            logs = np.log(x)
            if tcode == 4:
                return logs
            if tcode == 5:
                out[1:] = np.diff(logs)
            else:
                out[2:] = np.diff(logs, 2)
            return out
        rate = np.full(x.size, np.nan)
        rate[1:] = x[1:] / x[:-1] - 1.0
        out[2:] = np.diff(rate[1:])
        return out


def transform_panel(table: FredmdTable) -> np.ndarray:
    """Every series under its own code, columns aligned with table.names."""
    panel = np.empty_like(table.values)
    for j, (name, code) in enumerate(zip(table.names, table.tcodes)):
        panel[:, j] = apply_transform(table.values[:, j], code, name)
    return panel


def detect_outliers(series) -> np.ndarray:
    """Indices sitting more than ten interquartile ranges from the median.

    Quartiles use the linear-interpolation rule; a floor on the IQR keeps
    near-constant series from flagging every point.
    """
    x = np.asarray(series, dtype=np.float64)
    finite = x[np.isfinite(x)]
    if finite.size == 0:
        return np.empty(0, dtype=np.intp)
    median = float(np.median(finite))
    q1, q3 = np.quantile(finite, [0.25, 0.75])
    iqr = max(float(q3 - q1), IQR_FLOOR)
    with np.errstate(invalid="ignore"):
        flagged = np.abs(x - median) > OUTLIER_MULTIPLE * iqr
    return np.flatnonzero(np.isfinite(x) & flagged)


def _local_level_pass(x: np.ndarray, observed: np.ndarray, ratio: float,
                      diffuse: float = 1e7):
    """Kalman filter for a random-walk level with observation variance 1
    and state-innovation variance `ratio`. Returns filtered moments and
    the profile log-likelihood pieces."""
    n = x.size
    level = np.empty(n)
    spread = np.empty(n)
    predicted_level = np.empty(n)
    predicted_spread = np.empty(n)
    a = 0.0
    p = diffuse
    squares = 0.0
    log_scales = 0.0
    count = 0
    for t in range(n):
        predicted_level[t] = a
        predicted_spread[t] = p
        if observed[t]:
            gap = p + 1.0
            error = x[t] - a
            gain = p / gap
            a = a + gain * error
            p = p * (1.0 - gain)
            squares += error * error / gap
            log_scales += np.log(gap)
            count += 1
        level[t] = a
        spread[t] = p
        p = p + ratio
    return level, spread, predicted_level, predicted_spread, squares, log_scales, count


def local_level_smooth(series, ratios=None) -> np.ndarray:
    """Smoothed level of a random-walk-plus-noise model at every index.

    The signal-to-noise ratio comes from a coarse profile-likelihood
    grid; the observation scale is concentrated out analytically. NaN
    entries are treated as missing and receive the smoothed level.
    """
    x = np.asarray(series, dtype=np.float64)
    observed = np.isfinite(x)
    if observed.sum() == 0:
        return np.zeros_like(x)
    if observed.sum() == 1:
        return np.full_like(x, float(x[observed][0]))
    if ratios is None:
        ratios = np.logspace(-4.0, 2.0, 13)
    filled = np.where(observed, x, 0.0)

    best_ratio = None
    best_loglik = -np.inf
    for ratio in ratios:
        *_, squares, log_scales, count = _local_level_pass(filled, observed, ratio)
        scale = max(squares / count, 1e-300)
        loglik = -0.5 * (count * np.log(scale) + log_scales)
        if loglik > best_loglik:
            best_loglik = loglik
            best_ratio = ratio

    level, spread, predicted_level, predicted_spread, *_ = _local_level_pass(
        filled, observed, best_ratio)
    smoothed = np.empty_like(level)
    smoothed[-1] = level[-1]
    for t in range(x.size - 2, -1, -1):
        if predicted_spread[t + 1] > 0:
            gain = spread[t] / predicted_spread[t + 1]
        else:
            gain = 0.0
        smoothed[t] = level[t] + gain * (smoothed[t + 1] - predicted_level[t + 1])
    return smoothed


def impute_outliers(series, flagged, method: str = "kalman") -> np.ndarray:
    """Replace flagged points with model-based or interpolated values."""
    x = np.asarray(series, dtype=np.float64).copy()
    flagged = np.asarray(flagged, dtype=np.intp)
    if flagged.size == 0:
        return x
    masked = x.copy()
    masked[flagged] = np.nan
    if method == "kalman":
        smoothed = local_level_smooth(masked)
        x[flagged] = smoothed[flagged]
        return x
    if method == "interpolate":
        keep = np.flatnonzero(np.isfinite(masked))
        x[flagged] = np.interp(flagged, keep, masked[keep])
        return x
    raise ValueError(f"unknown imputation method {method!r}")


@dataclass(frozen=True)
class ForecastDataset:
    """Lag-stacked design plus aligned targets for one (target, horizon).

    x row t holds the transformed panel at months t, t-1, ..., t-5
    (variable-major: series j fills columns 6j..6j+5). y is the
    one-period annualized growth of the target; y_h[t] is the h-step
    target observed at month t+h but indexed by its forecast origin t.
    Predictors are left unstandardized; windowed consumers standardize
    with their own statistics.
    """

    target: str
    horizon: int
    strategy: int
    dates: tuple[tuple[int, int], ...]
    x: np.ndarray
    y: np.ndarray
    y_h: np.ndarray
    column_names: tuple[str, ...]
    retained: tuple[str, ...]
    dropped: tuple[str, ...]
    outlier_mask: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.x.shape[1]


def build_target(levels, horizon: int, acceleration: bool,
                 series_id: str = "target") -> tuple[np.ndarray, np.ndarray]:
    """One-period growth series and origin-indexed h-step target.

    y[t] = 1200 * (ln S_t - ln S_{t-1});
    y_h[t] = (1200/h) * (ln S_{t+h} - ln S_t), minus y[t] itself for
    acceleration-form targets (price indices).
    """
    s = np.asarray(levels, dtype=np.float64)
    bad = np.flatnonzero(np.isfinite(s) & (s <= 0))
    if bad.size:
        raise NonPositiveForLogError(series_id, int(bad[0]))
    with np.errstate(invalid="ignore"):
        logs = np.log(s)
    y = np.full(s.size, np.nan)
    y[1:] = ANNUALIZER * np.diff(logs)
    y_h = np.full(s.size, np.nan)
    if horizon < s.size:
        y_h[:-horizon] = (ANNUALIZER / horizon) * (logs[horizon:] - logs[:-horizon])
    if acceleration:
        y_h = y_h - y
    return y, y_h


def lag_stack(panel: np.ndarray, depth: int = LAG_DEPTH) -> np.ndarray:
    """Variable-major stack of lags 0..depth; early rows hold NaN."""
    t, n = panel.shape
    width = depth + 1
    out = np.full((t, n * width), np.nan)
    for lag in range(width):
        out[lag:, lag::width] = panel[:t - lag]
    return out


def build_dataset(table: FredmdTable, target: str, horizon: int,
                  strategy: int = 1, impute: str = "kalman") -> ForecastDataset:
    """Assemble the direct-forecast dataset for one target and horizon."""
    key = target.lower()
    if key not in TARGET_SERIES:
        raise TargetMissingError(f"unknown target {target!r}")
    series_name = TARGET_SERIES[key]
    if series_name not in table.names:
        raise TargetMissingError(f"{series_name} not in table")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if strategy not in (1, 2):
        raise ValueError("strategy must be 1 (drop) or 2 (impute)")

    y, y_h = build_target(table.column(series_name), horizon,
                          acceleration=(key == "cpi"), series_id=series_name)

    panel = transform_panel(table)
    mask = np.zeros(panel.shape, dtype=bool)
    for j in range(panel.shape[1]):
        mask[detect_outliers(panel[:, j]), j] = True

    contaminated = mask.any(axis=0)
    if strategy == 1:
        keep = ~contaminated
    else:
        keep = np.ones(panel.shape[1], dtype=bool)
        panel = panel.copy()
        for j in np.flatnonzero(contaminated):
            panel[:, j] = impute_outliers(panel[:, j],
                                          np.flatnonzero(mask[:, j]), impute)

    retained = tuple(n for n, k in zip(table.names, keep) if k)
    dropped = tuple(n for n, k in zip(table.names, keep) if not k)
    x = lag_stack(panel[:, keep])
    column_names = tuple(f"{name}.L{lag}" for name in retained
                         for lag in range(LAG_DEPTH + 1))
    return ForecastDataset(key, horizon, strategy, table.dates, x, y, y_h,
                           column_names, retained, dropped, mask)
