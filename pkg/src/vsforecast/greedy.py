"""Forward selection and backward elimination over column supports.

Both searches walk the support lattice greedily, scoring every move
with the closed-form SSE increments from the OLS update formulas, so a
full path costs little more than a handful of matrix-vector products
per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotApplicableError
from .linalg import (
    OlsState,
    RegressionProblem,
    _residualize,
    add_column_delta,
    collinearity_tolerance,
    drop_column_delta,
    solve_ols,
)

# Two candidate moves closer than this in SSE decrement count as tied;
# the lower column index wins so paths are deterministic.
TIE_TOLERANCE = 1e-12

SOLVER_FS = "fs"
SOLVER_BE = "be"


@dataclass(frozen=True)
class SubsetModel:
    """A fitted sparse linear model: support, OLS coefficients, fit stats."""

    support: tuple[int, ...]
    intercept: float
    coefficients: dict[int, float]
    sse: float
    r_squared: float
    solver: str

    @property
    def k(self) -> int:
        return len(self.support)

    def coefficient_vector(self, n_cols: int) -> np.ndarray:
        beta = np.zeros(n_cols)
        for j, value in self.coefficients.items():
            beta[j] = value
        return beta

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.full(x.shape[0], self.intercept)
        for j, value in self.coefficients.items():
            out += x[:, j] * value
        return out


def model_from_state(state: OlsState, solver: str) -> SubsetModel:
    order = np.argsort(state.support)
    support = tuple(state.support[i] for i in order)
    coefficients = {state.support[i]: float(state.coefficients[i]) for i in order}
    sst = state.problem.sst
    r_squared = 1.0 - state.sse / sst if sst > 0 else 0.0
    return SubsetModel(support, float(state.intercept), coefficients,
                       float(state.sse), r_squared, solver)


def refit_model(problem: RegressionProblem, support, solver: str) -> SubsetModel:
    """OLS refit on an arbitrary support, packaged as a SubsetModel."""
    return model_from_state(solve_ols(problem, sorted(int(j) for j in support)), solver)


@dataclass(frozen=True)
class GreedyPath:
    """Sequence of nested models, one per support size visited."""

    models: tuple[SubsetModel, ...]
    exhausted: bool = False

    def by_size(self) -> dict[int, SubsetModel]:
        return {m.k: m for m in self.models}


def default_k_max(problem: RegressionProblem) -> int:
    return max(1, min(problem.n_rows // 2, 50))


def forward_select(problem: RegressionProblem, k_max: int | None = None) -> GreedyPath:
    """Greedy forward selection up to k_max columns.

    Each step adds the candidate with the largest SSE decrease, computed
    for all candidates at once from running residual statistics: the
    decrement for candidate z is (r'z)^2 / e_z where e_z is z's residual
    variance on the current support, and both statistics are downdated
    in O(T p) after each addition.  Candidates whose residual variance
    falls below the collinearity tolerance leave the pool; if the pool
    empties the truncated path is returned with exhausted=True.
    """
    if k_max is None:
        k_max = default_k_max(problem)
    k_max = int(k_max)
    if not 1 <= k_max < problem.n_rows:
        raise ValueError(f"k_max must be in [1, {problem.n_rows - 1}]")
    k_max = min(k_max, problem.n_cols)

    xc = problem.xc
    tol = collinearity_tolerance(problem.n_rows)
    num = xc.T @ problem.yc
    den = problem.column_sq.copy()
    alive = den > tol

    state = solve_ols(problem, ())
    models: list[SubsetModel] = []
    exhausted = False
    while len(models) < k_max:
        usable = alive.copy()
        if state.support:
            usable[list(state.support)] = False
        if not usable.any():
            exhausted = True
            break
        deltas = np.where(usable, num * num / np.maximum(den, tol), -np.inf)
        best = float(deltas.max())
        chosen = int(np.flatnonzero(deltas >= best - TIE_TOLERANCE)[0])

        e, e_sq, num_chosen, _ = _residualize(state, chosen)
        _, state = add_column_delta(state, chosen)
        if state.updates_since_solve == 0:
            # Re-anchored with an exact solve: rebuild candidate stats too.
            num = xc.T @ state.projected_residuals
            xs = xc[:, list(state.support)]
            w = xs.T @ xc
            den = problem.column_sq - np.einsum("kp,kp->p", w, state.gram_inverse @ w)
        else:
            v = xc.T @ e
            den = den - v * v / e_sq
            num = num - (num_chosen / e_sq) * v
        alive &= den > tol
        models.append(model_from_state(state, SOLVER_FS))
    return GreedyPath(tuple(models), exhausted)


def backward_eliminate(problem: RegressionProblem, k_min: int = 1) -> GreedyPath:
    """Greedy backward elimination from the full model down to k_min.

    Requires p < T (the full-model fit must exist). Each step drops the
    support column whose removal raises the SSE least; the increment for
    column j is beta_j^2 / (G^-1)_jj, read off the current Gram inverse.
    Returns models of sizes p, p-1, ..., k_min in that order.
    """
    if problem.n_cols >= problem.n_rows:
        raise NotApplicableError(
            f"backward elimination needs p < T, got p={problem.n_cols}, T={problem.n_rows}")
    k_min = int(k_min)
    if not 1 <= k_min <= problem.n_cols:
        raise ValueError(f"k_min must be in [1, {problem.n_cols}]")

    state = solve_ols(problem, tuple(range(problem.n_cols)))
    models = [model_from_state(state, SOLVER_BE)]
    while len(state.support) > k_min:
        diag = np.diag(state.gram_inverse)
        deltas = state.coefficients ** 2 / diag
        best = float(deltas.min())
        tied = np.flatnonzero(deltas <= best + TIE_TOLERANCE)
        column = min(state.support[i] for i in tied)
        _, state = drop_column_delta(state, column)
        models.append(model_from_state(state, SOLVER_BE))
    return GreedyPath(tuple(models))
