"""Gradient-based k-sparse solvers: IHT, HTP, CoSaMP, subspace pursuit.

All four minimize ||y - b0 - X beta||^2 subject to at most k nonzero
coefficients by alternating gradient information with hard thresholding
and (except plain IHT) exact least squares on small candidate supports.
They share one driver that owns the stopping rule, divergence guard,
support-cycle detection, and the per-iteration trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DivergedError, RankDeficientError
from .greedy import SubsetModel, refit_model
from .linalg import RegressionProblem, solve_ols

SOLVER_IHT = "iht"
SOLVER_HTP = "htp"
SOLVER_COSAMP = "cosamp"
SOLVER_SP = "sp"

# SSE above this multiple of the empty-model SSE counts as divergence.
DIVERGENCE_FACTOR = 1e3

POWER_ITERATIONS = 50

MAX_BACKTRACKS = 40

REASON_R2_STALLED = "r2_stalled"
REASON_BETA_STALLED = "beta_stalled"
REASON_MAX_ITER = "max_iter"


@dataclass(frozen=True)
class GdsConfig:
    """Shared knobs for the gradient solvers.

    step_size "auto" recomputes the step each iteration by exact line
    search restricted to the active coordinates, halved until the SSE
    does not increase. A timid fixed step traps IHT and HTP in local
    minima (an off-support gradient entry can never outgrow an incumbent
    coefficient inside the thresholding), so the default takes the
    largest step the data accepts. A numeric step_size is applied as
    given, with no safeguard. eps1 is the minimum R-squared gain and
    eps2 the minimum squared coefficient change that keep iterating.
    """

    k: int
    step_size: float | str = "auto"
    eps1: float = 0.005
    eps2: float = 0.01
    max_iter: int = 500


class IterateRecord(NamedTuple):
    sse: float
    r_squared: float
    support_changes: int
    support_size: int


@dataclass
class GdsTrace:
    iterates: list[IterateRecord] = field(default_factory=list)
    converged: bool = False
    reason: str = REASON_MAX_ITER
    cycled: bool = False
    step_size: float = 0.0


def hard_threshold(values: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest-magnitude entries, zeroing the rest.

    Ties in magnitude are broken toward the lower index so results do
    not depend on sort internals.
    """
    values = np.asarray(values, dtype=np.float64)
    if k < 0:
        raise ValueError("k must be nonnegative")
    out = np.zeros_like(values)
    if k == 0:
        return out
    if k >= values.size:
        return values.copy()
    keep = np.argsort(-np.abs(values), kind="stable")[:k]
    out[keep] = values[keep]
    return out


def gradient(problem: RegressionProblem, beta: np.ndarray) -> np.ndarray:
    """Gradient of the centered squared-error loss: 2 X'X beta - 2 X'y."""
    xc = problem.xc
    return 2.0 * (xc.T @ (xc @ beta)) - 2.0 * (xc.T @ problem.yc)


def estimate_step_size(problem: RegressionProblem) -> float:
    """0.9 over the top eigenvalue of 2 X'X, by 50 power iterations."""
    xc = problem.xc
    p = problem.n_cols
    v = np.full(p, 1.0 / np.sqrt(p))
    eigenvalue = 1.0
    for _ in range(POWER_ITERATIONS):
        w = 2.0 * (xc.T @ (xc @ v))
        norm = np.linalg.norm(w)
        if norm == 0:
            raise ValueError("design matrix is identically zero")
        v = w / norm
        eigenvalue = norm
    return 0.9 / eigenvalue


def _sparse_residual(problem: RegressionProblem, beta: np.ndarray, support: np.ndarray) -> np.ndarray:
    if support.size == 0:
        return problem.yc.copy()
    return problem.yc - problem.xc[:, support] @ beta[support]


def _line_search_step(problem: RegressionProblem, beta: np.ndarray,
                      grad: np.ndarray, k: int) -> float:
    """Exact minimizer of the loss along the gradient restricted to the
    active window: the current support, or (when the gradient vanishes
    there, as after an OLS refit) the k largest gradient entries."""
    omega = np.flatnonzero(beta)
    if omega.size == 0 or not np.any(grad[omega]):
        omega = np.flatnonzero(hard_threshold(grad, max(k, 1)))
    if omega.size == 0:
        return 0.0
    g = grad[omega]
    xg = problem.xc[:, omega] @ g
    curvature = 2.0 * float(xg @ xg)
    if curvature <= 0.0:
        return 0.0
    return float(g @ g) / curvature


def _embed_ols(problem: RegressionProblem, support) -> np.ndarray:
    state = solve_ols(problem, support)
    beta = np.zeros(problem.n_cols)
    beta[list(support)] = state.coefficients
    return beta


def _run(problem: RegressionProblem, config: GdsConfig, solver: str,
         update: Callable[[np.ndarray, np.ndarray, float], np.ndarray],
         support_driven: bool, uses_step: bool = True) -> tuple[SubsetModel, GdsTrace]:
    """Iterate `update` under the shared stopping rule.

    The loop continues while the R-squared gain exceeds eps1 or the
    squared coefficient move exceeds eps2, and stops once both stall.
    Support-driven solvers (whose next iterate depends on the current
    one only through its support) also terminate when a support repeats
    non-consecutively, which would otherwise cycle forever.

    With step_size "auto" and a solver that consumes the step, each
    iteration starts from the line-search step and halves until the SSE
    stops increasing, so iterates never get worse. A fixed numeric step
    is trusted as given and only the divergence guard applies.
    """
    if not 1 <= config.k < problem.n_rows:
        raise ValueError(f"k must be in [1, {problem.n_rows - 1}]")
    adaptive = config.step_size == "auto"
    fixed_step = None if adaptive else float(config.step_size)
    trace = GdsTrace(step_size=0.0 if adaptive else fixed_step)
    xc = problem.xc

    beta = np.zeros(problem.n_cols)
    r_squared = 0.0
    current_sse = problem.sst
    seen_supports: set[tuple[int, ...]] = set()
    previous_support: tuple[int, ...] = ()

    for _ in range(config.max_iter):
        support = np.flatnonzero(beta)
        residual = _sparse_residual(problem, beta, support)
        grad = -2.0 * (xc.T @ residual)
        step = _line_search_step(problem, beta, grad, config.k) if adaptive else fixed_step
        new_beta = update(beta, grad, step)
        new_support = np.flatnonzero(new_beta)
        new_residual = _sparse_residual(problem, new_beta, new_support)
        new_sse = float(new_residual @ new_residual)
        if adaptive and uses_step:
            for _ in range(MAX_BACKTRACKS):
                if new_sse <= current_sse * (1.0 + 1e-10):
                    break
                step *= 0.5
                new_beta = update(beta, grad, step)
                new_support = np.flatnonzero(new_beta)
                new_residual = _sparse_residual(problem, new_beta, new_support)
                new_sse = float(new_residual @ new_residual)
        if adaptive:
            trace.step_size = step

        if new_sse > DIVERGENCE_FACTOR * problem.sst:
            raise DivergedError(
                f"{solver} SSE {new_sse:.3e} exceeded {DIVERGENCE_FACTOR:.0e} x SST")
        new_r_squared = 1.0 - new_sse / problem.sst if problem.sst > 0 else 0.0
        support_key = tuple(new_support.tolist())
        changes = len(set(support_key) ^ set(previous_support))
        trace.iterates.append(
            IterateRecord(new_sse, new_r_squared, changes, new_support.size))

        move = float(np.sum((new_beta - beta) ** 2))
        gain = new_r_squared - r_squared
        beta, r_squared, current_sse = new_beta, new_r_squared, new_sse
        if gain <= config.eps1 and move <= config.eps2:
            trace.converged = True
            trace.reason = REASON_BETA_STALLED if move == 0.0 else REASON_R2_STALLED
            break
        if support_driven:
            if support_key in seen_supports and support_key != previous_support:
                trace.cycled = True
                trace.converged = False
                trace.reason = REASON_MAX_ITER
                break
            seen_supports.add(support_key)
        previous_support = support_key

    model = refit_model(problem, np.flatnonzero(beta).tolist(), solver)
    return model, trace


def iht(problem: RegressionProblem, config: GdsConfig) -> tuple[SubsetModel, GdsTrace]:
    """Iterative hard thresholding: threshold the gradient step directly.

    The reported model refits OLS on the terminal support so that
    coefficient quality is comparable across solvers.
    """

    def update(beta, grad, step):
        return hard_threshold(beta - step * grad, config.k)

    return _run(problem, config, SOLVER_IHT, update, support_driven=False)


def htp(problem: RegressionProblem, config: GdsConfig) -> tuple[SubsetModel, GdsTrace]:
    """Hard thresholding pursuit: IHT support step, exact OLS coefficients."""

    def update(beta, grad, step):
        proposal = hard_threshold(beta - step * grad, config.k)
        return _embed_ols(problem, np.flatnonzero(proposal).tolist())

    return _run(problem, config, SOLVER_HTP, update, support_driven=True)


def cosamp(problem: RegressionProblem, config: GdsConfig) -> tuple[SubsetModel, GdsTrace]:
    """CoSaMP: OLS on the union of the current support and the 2k
    largest-magnitude gradient coordinates, thresholded back to k."""

    def update(beta, grad, step):
        proxy = np.flatnonzero(hard_threshold(grad, 2 * config.k))
        candidate = sorted(set(np.flatnonzero(beta).tolist()) | set(proxy.tolist()))
        if len(candidate) >= problem.n_rows:
            raise RankDeficientError(candidate, "CoSaMP candidate support exceeds T")
        fitted = _embed_ols(problem, candidate)
        return hard_threshold(fitted, config.k)

    return _run(problem, config, SOLVER_COSAMP, update, support_driven=True,
                uses_step=False)


def subspace_pursuit(problem: RegressionProblem, config: GdsConfig) -> tuple[SubsetModel, GdsTrace]:
    """Subspace pursuit: k-index augmentation, OLS, re-threshold, OLS."""

    def update(beta, grad, step):
        proxy = np.flatnonzero(hard_threshold(grad, config.k))
        candidate = sorted(set(np.flatnonzero(beta).tolist()) | set(proxy.tolist()))
        if len(candidate) >= problem.n_rows:
            raise RankDeficientError(candidate, "SP candidate support exceeds T")
        fitted = _embed_ols(problem, candidate)
        trimmed = np.flatnonzero(hard_threshold(fitted, config.k)).tolist()
        return _embed_ols(problem, trimmed)

    return _run(problem, config, SOLVER_SP, update, support_driven=True,
                uses_step=False)


GDS_SOLVERS = {
    SOLVER_IHT: iht,
    SOLVER_HTP: htp,
    SOLVER_COSAMP: cosamp,
    SOLVER_SP: subspace_pursuit,
}
