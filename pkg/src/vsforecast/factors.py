"""Factor extraction and diffusion-index forecasting.

Extraction is principal components on a standardized panel. Missing
entries are handled by EM: fill with the column mean (zero after
standardization), extract, refill the missing cells from the factor
reconstruction, and repeat until the imputed values settle. The
forecaster regresses a multi-step target on lags of the target series
and of the first few factors, with the three dimensions (number of
factors, target lags, factor lags) chosen by BIC or forward
cross-validation over a shared design so scores are comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientHistoryError, RankDeficientError, TooSparseColumnError
from .linalg import RegressionProblem, principal_components, solve_ols
from .selection import bic as bic_score
from .selection import forward_cv_select

MIN_OBSERVED_SHARE = 0.3
EM_TOLERANCE = 1e-6
EM_MAX_ITERATIONS = 200


@dataclass(frozen=True)
class FactorExtraction:
    """Principal-component factors of a standardized panel.

    factors has F'F = T * I; loadings reconstruct the standardized
    panel as F @ loadings.T. column_means and column_sds are the
    standardization used, so new rows can be projected consistently.
    filled is the standardized panel with missing cells imputed.
    """

    factors: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    column_means: np.ndarray
    column_sds: np.ndarray
    filled: np.ndarray
    em_converged: bool
    n_iterations: int

    @property
    def n_factors(self) -> int:
        return self.factors.shape[1]


def extract_factors(z: np.ndarray, n_factors: int,
                    min_observed_share: float = MIN_OBSERVED_SHARE,
                    tol: float = EM_TOLERANCE,
                    max_iterations: int = EM_MAX_ITERATIONS) -> FactorExtraction:
    """Standardize on observed entries, then PCA with EM imputation."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("panel must be two-dimensional")
    t, n = z.shape
    observed = np.isfinite(z)
    shares = observed.mean(axis=0)
    sparse = np.flatnonzero(shares < min_observed_share)
    if sparse.size:
        raise TooSparseColumnError(int(sparse[0]))

    counts = observed.sum(axis=0)
    sums = np.where(observed, z, 0.0).sum(axis=0)
    means = sums / counts
    centered = np.where(observed, z - means, 0.0)
    sds = np.sqrt((centered * centered).sum(axis=0) / np.maximum(counts - 1, 1))
    sds = np.where(sds < 1e-12, 1.0, sds)
    standardized = np.where(observed, (z - means) / sds, 0.0)

    if observed.all():
        pca = principal_components(standardized, n_factors)
        return FactorExtraction(pca.scores, pca.loadings, pca.eigenvalues,
                                means, sds, standardized, True, 0)

    filled = standardized.copy()
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        pca = principal_components(filled, n_factors)
        reconstruction = pca.scores @ pca.loadings.T
        new_fill = np.where(observed, standardized, reconstruction)
        delta = float(np.max(np.abs(new_fill - filled)))
        filled = new_fill
        if delta < tol:
            converged = True
            break
    pca = principal_components(filled, n_factors)
    return FactorExtraction(pca.scores, pca.loadings, pca.eigenvalues,
                            means, sds, filled, converged, iterations)


def project_factors(extraction: FactorExtraction, z_new: np.ndarray) -> np.ndarray:
    """Factor scores for new rows by least squares on the loadings.

    Rows may contain missing entries; each row is projected on the
    loadings of its observed columns. A row with nothing observed
    comes back as NaN.
    """
    z_new = np.atleast_2d(np.asarray(z_new, dtype=np.float64))
    standardized = (z_new - extraction.column_means) / extraction.column_sds
    observed = np.isfinite(standardized)
    lam = extraction.loadings
    out = np.full((z_new.shape[0], lam.shape[1]), np.nan)
    complete = observed.all(axis=1)
    if complete.any():
        gram = lam.T @ lam
        out[complete] = np.linalg.solve(gram, lam.T @ standardized[complete].T).T
    for i in np.flatnonzero(~complete):
        mask = observed[i]
        if not mask.any():
            continue
        sub = lam[mask]
        out[i] = np.linalg.lstsq(sub, standardized[i, mask], rcond=None)[0]
    return out


@dataclass(frozen=True)
class FactorForecast:
    """Fitted diffusion-index regression.

    The target is regressed on n_y_lags lags of the one-period series
    (starting at lag 0) and n_factor_lags lags of the first n_factors
    factor scores. factor_coefficients is lag-major with shape
    (n_factor_lags, n_factors).
    """

    n_factors: int
    n_y_lags: int
    n_factor_lags: int
    intercept: float
    y_coefficients: np.ndarray
    factor_coefficients: np.ndarray
    score: float
    scores: dict

    def predict(self, factor_rows: np.ndarray, y_rows: np.ndarray) -> float:
        """factor_rows[l] and y_rows[l] hold the values at lag l (most
        recent first); extra rows beyond the fitted lag orders are fine."""
        value = self.intercept
        if self.n_y_lags:
            y_rows = np.asarray(y_rows, dtype=np.float64)
            value += float(self.y_coefficients @ y_rows[:self.n_y_lags])
        if self.n_factors and self.n_factor_lags:
            factor_rows = np.atleast_2d(np.asarray(factor_rows, dtype=np.float64))
            block = factor_rows[:self.n_factor_lags, :self.n_factors]
            value += float(np.sum(self.factor_coefficients * block))
        return value


def _candidate_grid(n_factors_grid, y_lag_grid, factor_lag_grid, s):
    candidates = []
    for d in n_factors_grid:
        if d > s:
            continue
        for q in y_lag_grid:
            if d == 0:
                candidates.append((0, q, 0))
            else:
                for m in factor_lag_grid:
                    candidates.append((d, q, m))
    unique = list(dict.fromkeys(candidates))
    unique.sort(key=lambda c: (c[1] + c[0] * c[2], c[0], c[1], c[2]))
    return unique


def fit_factor_forecast(factors: np.ndarray,
                        y_series: np.ndarray,
                        y_target: np.ndarray,
                        n_factors_grid: Sequence[int] = range(0, 6),
                        y_lag_grid: Sequence[int] = range(0, 7),
                        factor_lag_grid: Sequence[int] = range(1, 7),
                        selection: str = "bic",
                        validation_length: int | None = None,
                        min_obs: int = 30) -> FactorForecast:
    """Choose (factors, target lags, factor lags) and fit the forecast.

    factors: (T, s) scores aligned with the window rows.
    y_series: (T,) one-period target values for the lag terms.
    y_target: (T,) multi-step target dated by its origin row; rows whose
        target is not yet observable must hold NaN.

    All candidates share one design (maximum lags trimmed from the
    front, unobservable targets from the back) so their scores compare
    like for like. BIC counts support size plus one parameters.
    """
    factors = np.asarray(factors, dtype=np.float64)
    y_series = np.asarray(y_series, dtype=np.float64)
    y_target = np.asarray(y_target, dtype=np.float64)
    t, s = factors.shape
    if y_series.shape != (t,) or y_target.shape != (t,):
        raise ValueError("factors, y_series, and y_target must share length")

    q_max = max(y_lag_grid)
    m_max = max(factor_lag_grid) if max(n_factors_grid, default=0) > 0 else 1
    burn = max(q_max - 1, m_max - 1, 0)
    rows = np.arange(burn, t)
    rows = rows[np.isfinite(y_target[rows])]
    if rows.size < min_obs:
        raise InsufficientHistoryError(
            f"{rows.size} usable rows, need at least {min_obs}")

    y_block = np.column_stack([y_series[rows - lag] for lag in range(q_max)]) \
        if q_max else np.empty((rows.size, 0))
    factor_blocks = [factors[rows - lag] for lag in range(m_max)]
    design = np.column_stack([y_block] + factor_blocks)
    problem = RegressionProblem(design, y_target[rows], standardized=False)

    candidates = _candidate_grid(n_factors_grid, y_lag_grid, factor_lag_grid, s)

    def columns_for(candidate):
        d, q, m = candidate
        y_cols = list(range(q))
        factor_cols = [q_max + lag * s + j for lag in range(m) for j in range(d)]
        return tuple(y_cols + factor_cols)

    def fit_candidates(problem_):
        fits = {}
        for candidate in candidates:
            support = columns_for(candidate)
            try:
                state = solve_ols(problem_, support)
            except RankDeficientError:
                continue
            coefficients = np.zeros(problem_.n_cols)
            coefficients[list(support)] = state.coefficients
            fits[candidate] = (state.intercept, coefficients)
        return fits

    if selection == "fcv":
        if validation_length is None:
            raise ValueError("forward cross-validation needs validation_length")
        report = forward_cv_select(problem, fit_candidates, candidates,
                                   validation_length)
        chosen = report.chosen
        intercept, dense = report.fit
        scores = report.scores
        score = scores[chosen]
    elif selection == "bic":
        scores = {}
        fits = fit_candidates(problem)
        chosen = None
        for candidate in candidates:
            if candidate not in fits:
                scores[candidate] = math.inf
                continue
            support = columns_for(candidate)
            residual = problem.y - fits[candidate][0] - design @ fits[candidate][1]
            sse = float(residual @ residual)
            scores[candidate] = bic_score(sse, rows.size, len(support) + 1)
            if chosen is None or scores[candidate] < scores[chosen]:
                chosen = candidate
        if chosen is None:
            raise RankDeficientError(())
        intercept, dense = fits[chosen]
        score = scores[chosen]
    else:
        raise ValueError(f"unknown selection rule {selection!r}")

    d, q, m = chosen
    y_coefficients = dense[:q].copy()
    factor_coefficients = np.zeros((m, d))
    for lag in range(m):
        for j in range(d):
            factor_coefficients[lag, j] = dense[q_max + lag * s + j]
    return FactorForecast(d, q, m, intercept, y_coefficients,
                          factor_coefficients, float(score), scores)
