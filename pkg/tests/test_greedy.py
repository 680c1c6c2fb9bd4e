"""Forward selection and backward elimination against refit oracles."""

import itertools

import numpy as np
import pytest

from vsforecast.errors import NotApplicableError
from vsforecast.greedy import TIE_TOLERANCE, backward_eliminate, forward_select
from vsforecast.linalg import RegressionProblem, standardize_columns


def make_problem(seed, t=60, p=12, k_true=3, noise=0.5):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((t, p))
    beta = np.zeros(p)
    beta[rng.choice(p, size=k_true, replace=False)] = rng.uniform(0.5, 2.0, size=k_true)
    y = x @ beta + noise * rng.standard_normal(t)
    problem, _, _ = standardize_columns(x, y)
    return problem


def naive_forward_select(problem, k_max):
    """Reference FS: refit OLS from scratch for every candidate at every step."""
    yc = problem.y - problem.y.mean()
    sst = float(yc @ yc)
    support = []
    path = []
    for _ in range(k_max):
        best_sse, best_j = None, None
        current = support + [None]
        for j in range(problem.n_cols):
            if j in support:
                continue
            current[-1] = j
            xs = problem.x[:, current] - problem.x[:, current].mean(axis=0)
            gram = xs.T @ xs
            eigenvalues = np.linalg.eigvalsh(gram)
            if eigenvalues[0] <= 1e-10:
                continue
            beta = np.linalg.solve(gram, xs.T @ yc)
            residual = yc - xs @ beta
            sse = float(residual @ residual)
            if best_sse is None or sse < best_sse - TIE_TOLERANCE:
                best_sse, best_j = sse, j
        if best_j is None:
            break
        support.append(best_j)
        path.append((tuple(sorted(support)), best_sse))
    return path


def test_forward_select_trivial_signal():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 10))
    y = 3.0 * x[:, 7]
    problem, _, _ = standardize_columns(x, y)
    path = forward_select(problem, k_max=1)
    assert path.models[0].support == (7,)
    assert path.models[0].r_squared > 0.999


def test_forward_select_nested_and_monotone():
    problem = make_problem(seed=1)
    path = forward_select(problem, k_max=8)
    supports = [set(m.support) for m in path.models]
    sses = [m.sse for m in path.models]
    for a, b in zip(supports, supports[1:]):
        assert a < b
    for a, b in zip(sses, sses[1:]):
        assert b <= a + 1e-12
    assert [m.k for m in path.models] == list(range(1, 9))


def test_forward_select_matches_naive_refit():
    for seed in range(12):
        rng = np.random.default_rng(1000 + seed)
        t = int(rng.integers(40, 120))
        p = int(rng.integers(8, 40))
        problem = make_problem(seed=seed + 50, t=t, p=p, k_true=min(4, p // 2))
        k_max = min(8, p - 1, t // 2)
        fast = forward_select(problem, k_max=k_max)
        naive = naive_forward_select(problem, k_max)
        assert len(fast.models) == len(naive)
        for model, (support, sse) in zip(fast.models, naive):
            assert model.support == support
            assert model.sse == pytest.approx(sse, abs=1e-8)


def test_forward_select_beats_k2_within_exhaustive_bound():
    # FS at k=2 can be suboptimal but never by much on easy designs; the
    # exhaustive minimum over all pairs bounds it from below.
    problem = make_problem(seed=3, t=80, p=12)
    path = forward_select(problem, k_max=2)
    fs_sse = path.models[1].sse
    best = np.inf
    yc = problem.y - problem.y.mean()
    for pair in itertools.combinations(range(12), 2):
        xs = problem.x[:, pair]
        beta = np.linalg.solve(xs.T @ xs, xs.T @ yc)
        residual = yc - xs @ beta
        best = min(best, float(residual @ residual))
    assert fs_sse >= best - 1e-10


def test_forward_select_exhausts_on_collinear_pool():
    rng = np.random.default_rng(4)
    base = rng.standard_normal(50)
    x = np.column_stack([base, base * 2.0, base * -1.5, rng.standard_normal(50)])
    y = base + 0.1 * rng.standard_normal(50)
    problem = RegressionProblem(x - x.mean(axis=0), y, standardized=False)
    path = forward_select(problem, k_max=3)
    assert path.exhausted
    assert len(path.models) == 2


def test_forward_select_deterministic():
    problem = make_problem(seed=5)
    first = forward_select(problem, k_max=6)
    second = forward_select(problem, k_max=6)
    assert [m.support for m in first.models] == [m.support for m in second.models]


def test_backward_eliminate_matches_refit_oracle():
    problem = make_problem(seed=6, t=60, p=10)
    path = backward_eliminate(problem, k_min=1)
    assert [m.k for m in path.models] == list(range(10, 0, -1))
    yc = problem.y - problem.y.mean()
    for model in path.models:
        xs = problem.x[:, list(model.support)]
        beta = np.linalg.solve(xs.T @ xs, xs.T @ yc)
        residual = yc - xs @ beta
        assert model.sse == pytest.approx(float(residual @ residual), abs=1e-8)


def test_backward_eliminate_drops_weakest_first():
    # With one dominant predictor and pure-noise columns, the dominant
    # column must survive to the k=1 model.
    rng = np.random.default_rng(7)
    x = rng.standard_normal((100, 6))
    y = 4.0 * x[:, 2] + 0.2 * rng.standard_normal(100)
    problem, _, _ = standardize_columns(x, y)
    path = backward_eliminate(problem)
    assert path.models[-1].support == (2,)


def test_backward_eliminate_requires_p_less_than_t():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((10, 12))
    problem = RegressionProblem(x, rng.standard_normal(10), standardized=False)
    with pytest.raises(NotApplicableError):
        backward_eliminate(problem)


def test_predict_and_coefficient_vector():
    problem = make_problem(seed=9)
    model = forward_select(problem, k_max=3).models[-1]
    beta = model.coefficient_vector(problem.n_cols)
    predictions = model.predict(problem.x)
    direct = model.intercept + problem.x @ beta
    assert np.allclose(predictions, direct)
    residual = problem.y - predictions
    assert float(residual @ residual) == pytest.approx(model.sse, rel=1e-8)
