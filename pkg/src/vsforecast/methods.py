"""Uniform adapters over the fitting methods.

Every solver is exposed as a MethodPlan: a candidate grid in
most-parsimonious-first order, a path fitter usable by any selector
(k-fold, forward CV, BIC/AIC), and a finalizer that turns the chosen
candidate's full-data fit into a SubsetModel. This is the layer the
simulation studies and the rolling forecast harness share.

Conventions baked in here:
  - subset solvers are refit by OLS on the chosen support;
  - the adaptive lasso keeps its penalized coefficients, and its
    first-stage weights and lambda grid are frozen on one reference
    problem so fold fits stay comparable;
  - gradient-solver step sizes are estimated once per problem, not per
    candidate; the tempering sampler sweeps k ascending, warm-starting
    each size from the previous one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable

import numpy as np

from .errors import InvalidKError, NotApplicableError, RankDeficientError
from .gds import GDS_SOLVERS, GdsConfig
from .greedy import (
    SOLVER_BE,
    SOLVER_FS,
    SubsetModel,
    backward_eliminate,
    default_k_max,
    forward_select,
    refit_model,
)
from .lasso import SOLVER_ADALASSO, default_lambda_grid, lasso_path, ridge_weights
from .linalg import RegressionProblem
from .selection import (
    SelectionPlan,
    SelectionReport,
    forward_cv_select,
    information_select,
    k_fold_select,
)
from .smc import SOLVER_SMC, SmcConfig, smc_best_subset
from .util import derive_rng

SUBSET_SOLVERS = ("fs", "be", "iht", "htp", "cosamp", "sp", "smc")
ALL_SOLVERS = SUBSET_SOLVERS + ("adalasso",)


@dataclass(frozen=True)
class MethodPlan:
    """One solver wired for selection: candidates are ordered most
    parsimonious first, fit_path maps a problem to candidate fits, and
    finalize builds the deliverable model from the chosen full-data fit."""

    name: str
    candidates: tuple
    fit_path: Callable[[RegressionProblem], dict]
    finalize: Callable[[RegressionProblem, Hashable, tuple], SubsetModel]


def _mean_fit(problem: RegressionProblem) -> tuple[float, np.ndarray]:
    return float(problem.y_mean), np.zeros(problem.n_cols)


def _model_fits(problem: RegressionProblem, models) -> dict:
    out = {}
    for size, model in models.items():
        out[size] = (model.intercept, model.coefficient_vector(problem.n_cols))
    return out


def refit_finalizer(solver: str):
    def finalize(problem: RegressionProblem, candidate, fit) -> SubsetModel:
        _, coefficients = fit
        support = tuple(int(j) for j in np.flatnonzero(coefficients))
        return refit_model(problem, support, solver)

    return finalize


def _default_grid(problem: RegressionProblem, k_grid) -> tuple[int, ...]:
    if k_grid is None:
        k_grid = range(0, default_k_max(problem) + 1)
    grid = tuple(sorted(set(int(k) for k in k_grid)))
    if any(k < 0 for k in grid):
        raise InvalidKError("subset sizes must be nonnegative")
    return grid


def _forward_plan(problem: RegressionProblem, k_grid) -> MethodPlan:
    grid = _default_grid(problem, k_grid)
    top = max(grid)

    def fit_path(problem_: RegressionProblem) -> dict:
        out = {}
        if 0 in grid:
            out[0] = _mean_fit(problem_)
        if top >= 1:
            path = forward_select(problem_, k_max=min(top, problem_.n_rows - 1))
            by_size = path.by_size()
            for k in grid:
                if k in by_size:
                    model = by_size[k]
                    out[k] = (model.intercept,
                              model.coefficient_vector(problem_.n_cols))
        return out

    return MethodPlan(SOLVER_FS, grid, fit_path, refit_finalizer(SOLVER_FS))


def _backward_plan(problem: RegressionProblem, k_grid) -> MethodPlan:
    if problem.n_cols >= problem.n_rows:
        raise NotApplicableError(
            "backward elimination needs fewer columns than rows")
    grid = _default_grid(problem, k_grid)

    def fit_path(problem_: RegressionProblem) -> dict:
        out = {}
        if 0 in grid:
            out[0] = _mean_fit(problem_)
        path = backward_eliminate(problem_, k_min=max(1, min(grid) or 1))
        out.update({k: fit for k, fit in _model_fits(problem_, path.by_size()).items()
                    if k in grid})
        return out

    return MethodPlan(SOLVER_BE, grid, fit_path, refit_finalizer(SOLVER_BE))


def _gds_plan(name: str, problem: RegressionProblem, k_grid) -> MethodPlan:
    solver = GDS_SOLVERS[name]
    grid = _default_grid(problem, k_grid)

    def fit_path(problem_: RegressionProblem) -> dict:
        out = {}
        if 0 in grid:
            out[0] = _mean_fit(problem_)
        for k in grid:
            if k == 0 or k >= problem_.n_rows:
                continue
            config = GdsConfig(k=k)
            try:
                model, _ = solver(problem_, config)
            except RankDeficientError:
                continue
            out[k] = (model.intercept, model.coefficient_vector(problem_.n_cols))
        return out

    return MethodPlan(name, grid, fit_path, refit_finalizer(name))


def _smc_plan(problem: RegressionProblem, k_grid,
              smc_config: SmcConfig | None, seed: int) -> MethodPlan:
    grid = _default_grid(problem, k_grid)
    config = smc_config if smc_config is not None else SmcConfig(seed=seed)

    def fit_path(problem_: RegressionProblem) -> dict:
        out = {}
        if 0 in grid:
            out[0] = _mean_fit(problem_)
        previous = None
        for k in grid:
            if k == 0 or k >= problem_.n_rows:
                continue
            rng = derive_rng(config.seed, "smc-path", problem_.n_rows, k)
            model, _ = smc_best_subset(problem_, k, config,
                                       warm_start=previous, rng=rng)
            previous = model
            out[k] = (model.intercept, model.coefficient_vector(problem_.n_cols))
        return out

    return MethodPlan(SOLVER_SMC, grid, fit_path, refit_finalizer(SOLVER_SMC))


def _adalasso_plan(problem: RegressionProblem, seed: int,
                   weight_problem: RegressionProblem | None) -> MethodPlan:
    reference = weight_problem if weight_problem is not None else problem
    weights, _ = ridge_weights(reference, seed=seed)
    grid = default_lambda_grid(reference, weights)
    candidates = tuple(range(grid.size))

    def fit_path(problem_: RegressionProblem) -> dict:
        path = lasso_path(problem_, lambda_grid=grid, weights=weights)
        return {i: (float(path.intercepts[i]), path.coefficients[i])
                for i in candidates}

    def finalize(problem_: RegressionProblem, candidate, fit) -> SubsetModel:
        intercept, coefficients = fit
        support = tuple(int(j) for j in np.flatnonzero(coefficients))
        values = {int(j): float(coefficients[j]) for j in support}
        error = problem_.y - intercept - problem_.x @ coefficients
        sse = float(error @ error)
        r_squared = 1.0 - sse / problem_.sst if problem_.sst > 0 else 0.0
        return SubsetModel(support=support, intercept=float(intercept),
                           coefficients=values, sse=sse, r_squared=r_squared,
                           solver=SOLVER_ADALASSO)

    return MethodPlan(SOLVER_ADALASSO, candidates, fit_path, finalize)


def make_plan(solver: str, problem: RegressionProblem,
              k_grid=None, seed: int = 0,
              smc_config: SmcConfig | None = None,
              weight_problem: RegressionProblem | None = None) -> MethodPlan:
    """Build the selection-ready plan for one solver on one problem."""
    if solver == "fs":
        return _forward_plan(problem, k_grid)
    if solver == "be":
        return _backward_plan(problem, k_grid)
    if solver in GDS_SOLVERS:
        return _gds_plan(solver, problem, k_grid)
    if solver == "smc":
        return _smc_plan(problem, k_grid, smc_config, seed)
    if solver == "adalasso":
        return _adalasso_plan(problem, seed, weight_problem)
    raise ValueError(f"unknown solver {solver!r}")


def select_model(problem: RegressionProblem, plan: MethodPlan,
                 selection: SelectionPlan) -> tuple[SubsetModel, SelectionReport]:
    """Run the configured selector over the plan and finalize the winner."""
    if selection.kind == "kfold":
        report = k_fold_select(problem, plan.fit_path, plan.candidates,
                               folds=selection.folds, seed=selection.seed)
    elif selection.kind == "fcv":
        if selection.validation_length is None:
            raise ValueError("forward CV needs validation_length")
        report = forward_cv_select(problem, plan.fit_path, plan.candidates,
                                   selection.validation_length)
    elif selection.kind in ("bic", "aic"):
        report = information_select(problem, plan.fit_path, plan.candidates,
                                    selection.kind)
    else:
        raise ValueError(f"unknown selection kind {selection.kind!r}")
    model = plan.finalize(problem, report.chosen, report.fit)
    return model, report


def fit_fixed_size(problem: RegressionProblem, solver: str, k: int,
                   seed: int = 0, smc_config: SmcConfig | None = None,
                   warm_start: SubsetModel | None = None) -> SubsetModel:
    """Fit one solver at one subset size, no selection involved."""
    if k == 0:
        return refit_model(problem, (), solver)
    if solver == "fs":
        path = forward_select(problem, k_max=k)
        return path.models[-1]
    if solver == "be":
        return backward_eliminate(problem, k_min=k).by_size()[k]
    if solver in GDS_SOLVERS:
        model, _ = GDS_SOLVERS[solver](problem, GdsConfig(k=k))
        return model
    if solver == "smc":
        config = smc_config if smc_config is not None else SmcConfig(seed=seed)
        model, _ = smc_best_subset(problem, k, config, warm_start=warm_start)
        return model
    raise ValueError(f"no fixed-size fit for solver {solver!r}")
