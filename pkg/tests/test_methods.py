"""Adapter layer: every solver behind one selection interface."""

import numpy as np
import pytest

from vsforecast.gds import GdsConfig, iht
from vsforecast.greedy import forward_select, refit_model
from vsforecast.errors import NotApplicableError
from vsforecast.lasso import default_lambda_grid, lasso_path, ridge_weights
from vsforecast.linalg import standardize_columns
from vsforecast.methods import ALL_SOLVERS, fit_fixed_size, make_plan, select_model
from vsforecast.selection import SelectionPlan
from vsforecast.smc import SmcConfig

from _oracles import make_sparse_problem, ols_sse


@pytest.fixture(scope="module")
def sparse():
    return make_sparse_problem(7, t=80, p=12, k_true=3)


def test_forward_plan_matches_direct_path(sparse):
    problem, _ = sparse
    plan = make_plan("fs", problem, k_grid=range(0, 6))
    fits = plan.fit_path(problem)
    assert set(fits) == set(range(6))
    path = forward_select(problem, k_max=5).by_size()
    for k in range(1, 6):
        intercept, coefs = fits[k]
        assert intercept == path[k].intercept
        np.testing.assert_array_equal(coefs, path[k].coefficient_vector(problem.n_cols))
    intercept0, coefs0 = fits[0]
    assert intercept0 == pytest.approx(float(problem.y.mean()))
    assert not coefs0.any()


def test_zero_candidate_finalizes_to_mean_model(sparse):
    problem, _ = sparse
    plan = make_plan("fs", problem, k_grid=[0, 1])
    fits = plan.fit_path(problem)
    model = plan.finalize(problem, 0, fits[0])
    assert model.support == ()
    assert model.sse == pytest.approx(problem.sst)


def test_backward_requires_thin_design():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 30))
    y = rng.standard_normal(20)
    problem, _, _ = standardize_columns(x, y)
    with pytest.raises(NotApplicableError):
        make_plan("be", problem)


def test_backward_plan_covers_grid(sparse):
    problem, truth = sparse
    plan = make_plan("be", problem, k_grid=range(0, 7))
    fits = plan.fit_path(problem)
    assert set(fits) == set(range(7))
    model = plan.finalize(problem, 3, fits[3])
    assert model.k == 3
    assert model.sse == pytest.approx(ols_sse(problem, model.support))


def test_gds_plan_hoists_step_size(sparse):
    problem, _ = sparse
    plan = make_plan("iht", problem, k_grid=[2, 4])
    fits = plan.fit_path(problem)
    for k in (2, 4):
        direct, _ = iht(problem, GdsConfig(k=k))
        _, coefs = fits[k]
        assert tuple(np.flatnonzero(coefs)) == direct.support


def test_smc_plan_deterministic_and_warm_chained(sparse):
    problem, truth = sparse
    config = SmcConfig(n_particles=120, seed=3)
    plan = make_plan("smc", problem, k_grid=range(1, 5), smc_config=config)
    first = plan.fit_path(problem)
    second = plan.fit_path(problem)
    assert set(first) == {1, 2, 3, 4}
    for k in first:
        np.testing.assert_array_equal(first[k][1], second[k][1])
    # size-3 entry should recover the planted support on this easy problem
    assert set(np.flatnonzero(first[3][1]).tolist()) == truth


def test_adalasso_plan_matches_direct_path(sparse):
    problem, _ = sparse
    plan = make_plan("adalasso", problem, seed=11)
    weights, _ = ridge_weights(problem, seed=11)
    grid = default_lambda_grid(problem, weights)
    direct = lasso_path(problem, lambda_grid=grid, weights=weights)
    fits = plan.fit_path(problem)
    assert len(fits) == grid.size
    for i in (0, 25, 60, 99):
        np.testing.assert_allclose(fits[i][1], direct.coefficients[i])


def test_adalasso_finalize_keeps_penalized_coefficients(sparse):
    problem, _ = sparse
    plan = make_plan("adalasso", problem, seed=11)
    fits = plan.fit_path(problem)
    index = max(i for i in fits if np.count_nonzero(fits[i][1]) >= 2)
    model = plan.finalize(problem, index, fits[index])
    assert model.solver == "adalasso"
    refit = refit_model(problem, model.support, "fs")
    # shrunken fit cannot beat the OLS refit on the same support
    assert model.sse >= refit.sse
    for j, value in model.coefficients.items():
        assert value == fits[index][1][j]


def test_finalize_refits_subset_by_ols(sparse):
    problem, _ = sparse
    plan = make_plan("fs", problem, k_grid=[3])
    fits = plan.fit_path(problem)
    model = plan.finalize(problem, 3, fits[3])
    assert model.solver == "fs"
    assert model.sse == pytest.approx(ols_sse(problem, model.support))


@pytest.mark.parametrize("kind", ["kfold", "fcv", "bic", "aic"])
def test_select_model_dispatches(sparse, kind):
    problem, truth = sparse
    plan = make_plan("fs", problem, k_grid=range(0, 7))
    selection = SelectionPlan(kind=kind, validation_length=20, seed=1)
    model, report = select_model(problem, plan, selection)
    assert report.chosen in plan.candidates
    assert model.k == np.count_nonzero(report.fit[1])
    if kind == "bic":
        assert set(model.support) == truth


def test_select_model_fcv_needs_length(sparse):
    problem, _ = sparse
    plan = make_plan("fs", problem, k_grid=[0, 1])
    with pytest.raises(ValueError):
        select_model(problem, plan, SelectionPlan(kind="fcv"))


def test_select_model_rejects_unknown_kind(sparse):
    problem, _ = sparse
    plan = make_plan("fs", problem, k_grid=[0, 1])
    with pytest.raises(ValueError):
        select_model(problem, plan, SelectionPlan(kind="loo"))


def test_make_plan_rejects_unknown_solver(sparse):
    problem, _ = sparse
    with pytest.raises(ValueError):
        make_plan("ridge", problem)


def test_every_solver_builds_a_plan(sparse):
    problem, _ = sparse
    for solver in ALL_SOLVERS:
        plan = make_plan(solver, problem, k_grid=[0, 2, 3])
        assert plan.name == solver


def test_fit_fixed_size_routes(sparse):
    problem, truth = sparse
    assert fit_fixed_size(problem, "fs", 0).support == ()
    assert fit_fixed_size(problem, "fs", 3).k == 3
    assert fit_fixed_size(problem, "be", 3).k == 3
    assert fit_fixed_size(problem, "htp", 3).k == 3
    smc = fit_fixed_size(problem, "smc", 3,
                         smc_config=SmcConfig(n_particles=120, seed=5))
    assert set(smc.support) == truth
    with pytest.raises(ValueError):
        fit_fixed_size(problem, "adalasso", 3)
