"""Tuning-parameter selection: k-fold CV, forward CV, and information
criteria.

Both selectors are generic over a "path fitter": a callable that fits
one problem and returns {candidate: (intercept, dense coefficient
vector)} for every candidate tuning value (subset size, lambda index,
lag order). Candidates must be supplied most-parsimonious-first; ties
in validation score resolve toward the earlier candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .errors import InsufficientHistoryError
from .linalg import RegressionProblem, subset_rows

PathFitter = Callable[[RegressionProblem], Mapping[Hashable, tuple[float, np.ndarray]]]


def bic(sse: float, n_obs: int, n_params: int) -> float:
    """T ln(SSE/T) + ln(T) * #params."""
    sse = max(float(sse), 1e-300)
    return n_obs * math.log(sse / n_obs) + math.log(n_obs) * n_params


def aic(sse: float, n_obs: int, n_params: int) -> float:
    """T ln(SSE/T) + 2 * #params."""
    sse = max(float(sse), 1e-300)
    return n_obs * math.log(sse / n_obs) + 2.0 * n_params


@dataclass(frozen=True)
class SelectionReport:
    """Chosen candidate with its score table and the full-data fit."""

    chosen: Hashable
    scores: dict
    fit: tuple[float, np.ndarray]


@dataclass(frozen=True)
class SelectionPlan:
    """How to pick a tuning value: random-fold CV for i.i.d. data,
    forward CV for time series, or an information criterion."""

    kind: str = "kfold"            # kfold | fcv | bic | aic
    folds: int = 5
    validation_length: int | None = None
    seed: int = 0


def _predict(fit: tuple[float, np.ndarray], x: np.ndarray) -> np.ndarray:
    intercept, coefficients = fit
    return intercept + x @ coefficients


def _choose(candidates: Sequence[Hashable], scores: dict,
            slack: float = 0.0) -> Hashable:
    finite = [c for c in candidates if np.isfinite(scores.get(c, np.inf))]
    if not finite:
        raise ValueError("no candidate produced a finite validation score")
    best = min(scores[c] for c in finite)
    for candidate in candidates:
        if np.isfinite(scores.get(candidate, np.inf)) and scores[candidate] <= best + slack:
            return candidate
    raise AssertionError("unreachable")


def k_fold_select(problem: RegressionProblem,
                  fit_path: PathFitter,
                  candidates: Sequence[Hashable],
                  folds: int = 5,
                  seed: int = 0) -> SelectionReport:
    """Random-partition cross-validation for i.i.d. rows.

    Rows are shuffled once into `folds` groups; each candidate's score
    is the mean held-out squared error across folds. Candidates missing
    from any fold's path (e.g. a truncated greedy path) score +inf.

    The winner is the most parsimonious candidate whose score is within
    one standard error of the minimum. Plain argmin is anti-conservative
    here: with dozens of candidates the minimum of that many noisy fold
    means drifts toward over-parameterized models whose extra terms fit
    nothing. The one-standard-error bar also settles exact ties toward
    the earlier candidate.
    """
    if folds < 2 or folds > problem.n_rows:
        raise ValueError("folds must be in [2, T]")
    rng = np.random.default_rng(seed)
    assignment = rng.permuted(np.arange(problem.n_rows) % folds)
    fold_errors = {candidate: [] for candidate in candidates}
    for fold in range(folds):
        hold = assignment == fold
        fits = fit_path(subset_rows(problem, ~hold))
        x_hold = problem.x[hold]
        y_hold = problem.y[hold]
        for candidate in candidates:
            if candidate not in fits:
                fold_errors[candidate].append(np.inf)
                continue
            error = y_hold - _predict(fits[candidate], x_hold)
            fold_errors[candidate].append(float(np.mean(error * error)))
    scores = {}
    for candidate in candidates:
        values = fold_errors[candidate]
        complete = len(values) == folds and all(np.isfinite(v) for v in values)
        scores[candidate] = float(np.mean(values)) if complete else np.inf
    finite = [c for c in candidates if np.isfinite(scores[c])]
    if not finite:
        raise ValueError("no candidate produced a finite validation score")
    at_min = min(finite, key=lambda c: scores[c])
    spread = float(np.std(fold_errors[at_min], ddof=1)) / math.sqrt(folds)
    chosen = _choose(candidates, scores, slack=spread)
    full = fit_path(problem)
    if chosen not in full:
        present = [c for c in candidates if c in full and np.isfinite(scores[c])]
        chosen = min(present, key=lambda c: scores[c])
    return SelectionReport(chosen, scores, full[chosen])


def information_select(problem: RegressionProblem,
                       fit_path: PathFitter,
                       candidates: Sequence[Hashable],
                       criterion: str = "bic") -> SelectionReport:
    """Score one full-data path by BIC or AIC; parameters counted as the
    number of nonzero coefficients plus one for the intercept."""
    if criterion not in ("bic", "aic"):
        raise ValueError(f"unknown criterion {criterion!r}")
    score_fn = bic if criterion == "bic" else aic
    fits = fit_path(problem)
    scores = {}
    for candidate in candidates:
        if candidate not in fits:
            scores[candidate] = np.inf
            continue
        error = problem.y - _predict(fits[candidate], problem.x)
        sse = float(error @ error)
        n_params = int(np.count_nonzero(fits[candidate][1])) + 1
        scores[candidate] = score_fn(sse, problem.n_rows, n_params)
    chosen = _choose(candidates, scores)
    return SelectionReport(chosen, scores, fits[chosen])


def forward_cv_select(problem: RegressionProblem,
                      fit_path: PathFitter,
                      candidates: Sequence[Hashable],
                      validation_length: int) -> SelectionReport:
    """Time-ordered validation: fit once on the pre-validation block,
    score fixed coefficients one step at a time over the trailing block,
    then refit the chosen candidate on the full window.

    Fitted coefficients never see validation rows, so shifting the
    validation targets can change the choice but not any fit.
    """
    v = int(validation_length)
    if v < 1 or v >= problem.n_rows - 1:
        raise InsufficientHistoryError(
            f"validation length {v} leaves no fit block in {problem.n_rows} rows")
    split = problem.n_rows - v
    fits = fit_path(subset_rows(problem, np.arange(split)))
    x_val = problem.x[split:]
    y_val = problem.y[split:]
    scores = {}
    for candidate in candidates:
        if candidate not in fits:
            scores[candidate] = np.inf
            continue
        error = y_val - _predict(fits[candidate], x_val)
        scores[candidate] = float(np.mean(error * error))
    chosen = _choose(candidates, scores)
    full = fit_path(problem)
    if chosen not in full:
        present = [c for c in candidates if c in full and np.isfinite(scores[c])]
        chosen = min(present, key=lambda c: scores[c])
    return SelectionReport(chosen, scores, full[chosen])
