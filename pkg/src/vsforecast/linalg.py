"""Regression containers, fast OLS support updates, and principal components.

Everything downstream (greedy search, gradient solvers, the tempered
sampler, factor models) fits least squares on column subsets of one
design matrix.  This module owns that machinery: an immutable problem
container, an OLS state that can grow or shrink its support in O(T k)
per move instead of a full refit, and the PCA used for factor extraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CollinearColumnError, RankDeficientError

# Smallest admissible Gram eigenvalue for an exact subset solve.
RANK_EIGENVALUE_FLOOR = 1e-10

# Residual variance below collinearity_tolerance(T) marks a candidate
# column as numerically inside the span of the current support.
COLLINEARITY_FACTOR = 1e-8

# Chained fast updates are re-anchored with a fresh solve this often to
# stop floating-point drift from accumulating.
RESOLVE_INTERVAL = 50


def collinearity_tolerance(n_rows: int) -> float:
    return COLLINEARITY_FACTOR * n_rows


class ColumnMeta(NamedTuple):
    """Identity of a design column: source variable and lag offset."""

    variable_id: str
    lag: int


@dataclass(frozen=True)
class RegressionProblem:
    """Immutable (X, y) pair with column identity metadata.

    Parameters
    ----------
    x : ndarray, shape (T, p)
        Design matrix.  Columns are expected to be standardized when
        ``standardized`` is True; row-subset views of a standardized
        problem should set it to False.
    y : ndarray, shape (T,)
        Response. Never standardized; intercepts absorb its mean.
    column_meta : tuple of ColumnMeta, optional
        One entry per column. Defaults to ("x{j}", 0).
    standardized : bool
        Declares that every column has sample mean 0 and sample
        variance 1 (checked when ``validate`` is requested).
    """

    x: np.ndarray
    y: np.ndarray
    column_meta: tuple[ColumnMeta, ...] = ()
    standardized: bool = True

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError("x must be (T, p) and y must be (T,) with matching T")
        if x.shape[0] < 2 or x.shape[1] < 1:
            raise ValueError("need at least 2 rows and 1 column")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("non-finite entries in design or response")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        meta = self.column_meta
        if not meta:
            meta = tuple(ColumnMeta(f"x{j}", 0) for j in range(x.shape[1]))
        else:
            meta = tuple(ColumnMeta(str(v), int(l)) for v, l in meta)
            if len(meta) != x.shape[1]:
                raise ValueError("column_meta length does not match column count")
        object.__setattr__(self, "column_meta", meta)

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_cols(self) -> int:
        return self.x.shape[1]

    @cached_property
    def column_means(self) -> np.ndarray:
        if self.standardized:
            return np.zeros(self.n_cols)
        return self.x.mean(axis=0)

    @cached_property
    def xc(self) -> np.ndarray:
        """Column-centered design; identical to x for standardized problems."""
        if self.standardized:
            return self.x
        return self.x - self.column_means

    @cached_property
    def y_mean(self) -> float:
        return float(self.y.mean())

    @cached_property
    def yc(self) -> np.ndarray:
        return self.y - self.y_mean

    @cached_property
    def sst(self) -> float:
        """Total sum of squares about the mean: the SSE of the empty model."""
        return float(self.yc @ self.yc)

    @cached_property
    def column_sq(self) -> np.ndarray:
        """Centered sum of squares per column."""
        return np.einsum("ij,ij->j", self.xc, self.xc)

    def check_standardized(self, mean_tol: float = 1e-10, var_tol: float = 1e-8) -> None:
        """Assert the declared standardization actually holds."""
        means = self.x.mean(axis=0)
        if np.abs(means).max() > mean_tol:
            raise ValueError(f"column mean off by {np.abs(means).max():.2e}")
        variances = self.x.var(axis=0, ddof=1)
        if np.abs(variances - 1.0).max() > var_tol:
            raise ValueError(f"column variance off by {np.abs(variances - 1.0).max():.2e}")


def standardize_columns(
    x: np.ndarray,
    y: np.ndarray,
    column_meta: Sequence[ColumnMeta] | None = None,
) -> tuple[RegressionProblem, np.ndarray, np.ndarray]:
    """Standardize every column to mean 0, sample variance 1 (ddof=1).

    Returns the problem plus the (means, sds) used, so held-out rows can
    be mapped into the same coordinates without touching their own stats.
    """
    x = np.asarray(x, dtype=np.float64)
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    if np.any(sds <= 0):
        raise ValueError("zero-variance column cannot be standardized")
    xs = (x - means) / sds
    problem = RegressionProblem(xs, np.asarray(y, dtype=np.float64),
                                tuple(column_meta) if column_meta else (),
                                standardized=True)
    return problem, means, sds


def subset_rows(problem: RegressionProblem, rows) -> RegressionProblem:
    """Problem restricted to a row slice; columns keep their coordinates.

    The result is flagged non-standardized because subset columns no
    longer have exact zero mean / unit variance under their own stats.
    """
    return RegressionProblem(problem.x[rows], problem.y[rows],
                             problem.column_meta, standardized=False)


@dataclass(frozen=True)
class OlsState:
    """Least-squares fit on an ordered column support, ready for updates.

    Fields keep the quantities the add/drop formulas need: the Gram
    inverse of the (centered) support columns, coefficients in support
    order, the projected residuals, and the SSE.
    """

    problem: RegressionProblem
    support: tuple[int, ...]
    gram_inverse: np.ndarray
    coefficients: np.ndarray
    intercept: float
    sse: float
    projected_residuals: np.ndarray
    updates_since_solve: int = 0

    @property
    def r_squared(self) -> float:
        sst = self.problem.sst
        return 1.0 - self.sse / sst if sst > 0 else 0.0


def solve_ols(problem: RegressionProblem, support: Sequence[int]) -> OlsState:
    """Exact least-squares fit (with intercept) on the given columns.

    Raises RankDeficientError when the support Gram matrix has an
    eigenvalue at or below the rank floor. The empty support yields the
    intercept-only model with SSE equal to the total sum of squares.
    """
    support = tuple(int(j) for j in support)
    if len(set(support)) != len(support):
        raise ValueError(f"duplicate indices in support {support}")
    if any(j < 0 or j >= problem.n_cols for j in support):
        raise ValueError(f"support index out of range: {support}")
    if not support:
        return OlsState(problem, (), np.zeros((0, 0)), np.zeros(0),
                        problem.y_mean, problem.sst, problem.yc.copy())
    xs = problem.xc[:, support]
    gram = xs.T @ xs
    eigenvalues, eigenvectors = np.linalg.eigh(gram)
    if eigenvalues[0] <= RANK_EIGENVALUE_FLOOR:
        raise RankDeficientError(support)
    gram_inverse = (eigenvectors / eigenvalues) @ eigenvectors.T
    xty = xs.T @ problem.yc
    coefficients = gram_inverse @ xty
    residuals = problem.yc - xs @ coefficients
    sse = float(residuals @ residuals)
    intercept = problem.y_mean - float(problem.column_means[list(support)] @ coefficients)
    return OlsState(problem, support, gram_inverse, coefficients, intercept, sse, residuals)


def _residualize(state: OlsState, column: int):
    """Residual of a candidate column on the current support.

    Returns (e, e_sq, num): the residual vector, its explained-variance
    denominator z'(I - P)z, and the numerator y'e.
    """
    z = state.problem.xc[:, column]
    if not state.support:
        e = z
        e_sq = float(z @ z)
        ginv_g = np.zeros(0)
    else:
        xs = state.problem.xc[:, list(state.support)]
        g = xs.T @ z
        ginv_g = state.gram_inverse @ g
        e = z - xs @ ginv_g
        e_sq = float(z @ e)
    num = float(state.projected_residuals @ z)
    return e, e_sq, num, ginv_g


def add_column_delta(state: OlsState, column: int) -> tuple[float, OlsState]:
    """SSE decrease and updated state from appending one column.

    Uses the rank-one block update of the Gram inverse, so the cost is
    O(T k) rather than a fresh solve. The state re-anchors itself with
    an exact solve every RESOLVE_INTERVAL chained updates.
    """
    column = int(column)
    if column in state.support:
        raise ValueError(f"column {column} already in support")
    problem = state.problem
    e, e_sq, num, ginv_g = _residualize(state, column)
    if e_sq <= collinearity_tolerance(problem.n_rows):
        raise CollinearColumnError(f"column {column} is collinear with support {state.support}")
    delta = num * num / e_sq

    new_support = state.support + (column,)
    if state.updates_since_solve + 1 >= RESOLVE_INTERVAL:
        return delta, solve_ols(problem, new_support)

    k = len(state.support)
    new_inverse = np.empty((k + 1, k + 1))
    new_inverse[:k, :k] = state.gram_inverse + np.outer(ginv_g, ginv_g) / e_sq
    new_inverse[:k, k] = -ginv_g / e_sq
    new_inverse[k, :k] = new_inverse[:k, k]
    new_inverse[k, k] = 1.0 / e_sq

    new_coef = np.empty(k + 1)
    beta_new = num / e_sq
    new_coef[:k] = state.coefficients - ginv_g * beta_new
    new_coef[k] = beta_new
    residuals = state.projected_residuals - beta_new * e
    sse = state.sse - delta
    intercept = problem.y_mean - float(problem.column_means[list(new_support)] @ new_coef)
    return delta, OlsState(problem, new_support, new_inverse, new_coef, intercept,
                           sse, residuals, state.updates_since_solve + 1)


def drop_column_delta(state: OlsState, column: int) -> tuple[float, OlsState]:
    """SSE increase and updated state from removing one support column.

    Downdates the Gram inverse by partitioning the dropped column into
    the trailing position; the SSE increment is beta_j^2 / (G^-1)_jj.
    """
    column = int(column)
    if column not in state.support:
        raise ValueError(f"column {column} not in support {state.support}")
    problem = state.problem
    position = state.support.index(column)
    keep = [i for i in range(len(state.support)) if i != position]
    m = state.gram_inverse[position, position]
    beta_j = state.coefficients[position]
    delta = beta_j * beta_j / m

    new_support = tuple(state.support[i] for i in keep)
    if not new_support:
        empty = solve_ols(problem, ())
        return delta, empty
    if state.updates_since_solve + 1 >= RESOLVE_INTERVAL:
        return delta, solve_ols(problem, new_support)

    u = state.gram_inverse[keep, position]
    new_inverse = state.gram_inverse[np.ix_(keep, keep)] - np.outer(u, u) / m
    new_coef = state.coefficients[keep] - u * (beta_j / m)
    xs = problem.xc[:, list(new_support)]
    residuals = problem.yc - xs @ new_coef
    sse = state.sse + delta
    intercept = problem.y_mean - float(problem.column_means[list(new_support)] @ new_coef)
    return delta, OlsState(problem, new_support, new_inverse, new_coef, intercept,
                           sse, residuals, state.updates_since_solve + 1)


@dataclass(frozen=True)
class PrincipalComponents:
    """PCA of a data matrix: scores (T, s), loadings (n, s), eigenvalues (s,)."""

    scores: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray


def principal_components(z: np.ndarray, n_components: int) -> PrincipalComponents:
    """Leading principal components via the smaller-side eigenproblem.

    Eigendecomposes ZZ' (T x T) when T < n and Z'Z otherwise, which is
    what makes wide macro panels cheap. Scores satisfy F'F = T I and
    reconstruct Z as scores @ loadings'. Eigenvalues are those of ZZ'
    in descending order; their full set sums to ||Z||_F^2.

    Sign convention: the largest-magnitude entry of each loading vector
    is positive, so factor signs are reproducible.
    """
    z = np.asarray(z, dtype=np.float64)
    t, n = z.shape
    s = int(n_components)
    if s < 1 or s > min(t, n):
        raise ValueError(f"n_components must be in [1, {min(t, n)}]")
    if t <= n:
        small = z @ z.T
        eigenvalues, vectors = np.linalg.eigh(small)
        order = np.argsort(eigenvalues)[::-1][:s]
        eigenvalues = eigenvalues[order]
        left = vectors[:, order]
    else:
        small = z.T @ z
        eigenvalues, vectors = np.linalg.eigh(small)
        order = np.argsort(eigenvalues)[::-1][:s]
        eigenvalues = eigenvalues[order]
        right = vectors[:, order]
        scale = np.sqrt(np.maximum(eigenvalues, 1e-300))
        left = (z @ right) / scale
    scores = left * np.sqrt(t)
    loadings = z.T @ scores / t
    for i in range(s):
        anchor = np.argmax(np.abs(loadings[:, i]))
        if loadings[anchor, i] < 0:
            loadings[:, i] = -loadings[:, i]
            scores[:, i] = -scores[:, i]
    return PrincipalComponents(scores, loadings, np.maximum(eigenvalues, 0.0))
