"""Independent reference computations shared across test modules.

Everything here deliberately avoids the package's fast paths: plain
normal equations, explicit enumeration, brute-force scoring. Slow and
obviously correct.
"""

import itertools

import numpy as np


def ols_sse(problem, support):
    """SSE of the intercept-plus-support OLS fit, by direct solve."""
    yc = problem.y - problem.y.mean()
    support = list(support)
    if not support:
        return float(yc @ yc)
    xs = problem.x[:, support] - problem.x[:, support].mean(axis=0)
    beta = np.linalg.solve(xs.T @ xs, xs.T @ yc)
    residual = yc - xs @ beta
    return float(residual @ residual)


def exhaustive_best(problem, k):
    """Enumerate all size-k supports; return (best_support, best_sse)."""
    best_sse = np.inf
    best_support = None
    for support in itertools.combinations(range(problem.n_cols), k):
        sse = ols_sse(problem, support)
        if sse < best_sse:
            best_sse = sse
            best_support = support
    return best_support, best_sse


def all_subset_sses(problem, k):
    """SSE of every size-k support, as {support_tuple: sse}."""
    return {support: ols_sse(problem, support)
            for support in itertools.combinations(range(problem.n_cols), k)}


def make_sparse_problem(seed, t=60, p=15, k_true=3, r_squared=0.8):
    """Random iid design with a planted sparse signal at a target R^2."""
    from vsforecast.linalg import standardize_columns

    rng = np.random.default_rng(seed)
    x = rng.standard_normal((t, p))
    support = np.sort(rng.choice(p, size=k_true, replace=False))
    beta = np.zeros(p)
    beta[support] = rng.uniform(0.5, 1.5, size=k_true)
    signal = x @ beta
    signal_variance = float(beta @ beta)
    noise_variance = signal_variance * (1 - r_squared) / r_squared
    y = signal + np.sqrt(noise_variance) * rng.standard_normal(t)
    problem, _, _ = standardize_columns(x, y)
    return problem, set(support.tolist())
