"""Tempered sequential Monte Carlo search over k-subsets.

The target distribution puts mass exp(-SSE(U)) on each size-k support
U, so its mode is the best-subset solution. A particle population is
moved from an easy initial law (sequential sampling proportional to
single-column R-squared shares) to the target through a bridge of
intermediate distributions indexed by an exponent gamma in [0, 1]:

    f_gamma(U)  proportional to  exp(-SSE(U))^gamma * f0(U)^(1-gamma)

Each round picks the largest gamma increment that keeps the effective
sample size above a floor (by bisection), resamples systematically,
and rejuvenates particles with Metropolis-Hastings moves that replace
a random block of the support. The best support ever evaluated, not
just the final population, is returned after an OLS refit.

Particles are ordered index tuples because the initial law is a
without-replacement sequential draw whose density depends on order;
SSE itself is order-invariant and cached per index set.

All population-level operations are vectorized across the M particles,
which is what makes desk-scale runs (M in the hundreds, p in the
thousands) fast enough for routine use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import InvalidKError
from .greedy import SubsetModel, refit_model
from .linalg import RegressionProblem
from .util import derive_rng

SOLVER_SMC = "smc"

# Floor used instead of exact zeros inside log-density computations;
# exp() of the resulting logs underflows back to 0.
TINY = 1e-300


@dataclass(frozen=True)
class SmcConfig:
    """Sampler knobs.

    n_particles: population size M.
    ess_fraction: resampling keeps ESS >= ess_fraction * M each round.
    proposal_mix: weight on the count-based branch of the MH proposal
        (the rest draws from the initial law's shares).
    warm_start_mix: weight on the add/trim branch when a previous
        solution seeds the initial population.
    boost_target: rejuvenation stops once the per-move mean acceptance
        probabilities accumulate to this value (5.0 means 500%).
    max_moves: hard cap on MH moves per rejuvenation phase.
    """

    n_particles: int = 1000
    ess_fraction: float = 0.5
    proposal_mix: float = 0.5
    warm_start_mix: float = 0.1
    boost_target: float = 5.0
    max_moves: int = 10
    gamma_tolerance: float = 1e-6
    min_gamma_increment: float = 1e-6
    seed: int = 0


class Particle(NamedTuple):
    support: tuple[int, ...]
    sse: float


class RoundRecord(NamedTuple):
    gamma: float
    ess: float
    n_distinct: int
    best_sse: float
    acceptance: float


@dataclass
class SmcDiagnostics:
    rounds: list[RoundRecord] = field(default_factory=list)
    n_solves: int = 0
    n_proposals: int = 0


@dataclass(frozen=True)
class TemperingState:
    """Population snapshot: exponent, ordered supports, cached stats."""

    gamma: float
    supports: np.ndarray          # (M, k) int64, ordered draws
    sses: np.ndarray              # (M,)
    log_init: np.ndarray          # (M,) log initial-law density
    density: "InclusionDensity"

    @property
    def n_particles(self) -> int:
        return self.supports.shape[0]

    @property
    def k(self) -> int:
        return self.supports.shape[1]

    def particles(self) -> list[Particle]:
        return [Particle(tuple(row.tolist()), float(sse))
                for row, sse in zip(self.supports, self.sses)]


class SseCache:
    """Batched, memoized subset SSE evaluation with best-ever tracking.

    Supports arrive as (N, k) index arrays; each distinct index set is
    solved once via batched normal equations and remembered. The best
    SSE ever seen anywhere (initial sample, proposals, duplicates) is
    kept so the final answer can scan every evaluated candidate.
    """

    def __init__(self, problem: RegressionProblem):
        self.problem = problem
        self._xc = problem.xc
        self._yc = problem.yc
        self._sst = problem.sst
        self._table: dict[bytes, float] = {}
        self.best_sse = math.inf
        self.best_support: tuple[int, ...] | None = None
        self.n_solves = 0

    def evaluate(self, supports: np.ndarray) -> np.ndarray:
        supports = np.asarray(supports, dtype=np.int64)
        if supports.ndim == 1:
            return self.evaluate(supports[None, :])[0]
        n = supports.shape[0]
        sorted_rows = np.sort(supports, axis=1)
        out = np.empty(n)
        missing: list[int] = []
        for i in range(n):
            value = self._table.get(sorted_rows[i].tobytes())
            if value is None:
                missing.append(i)
            else:
                out[i] = value
        if missing:
            rows = sorted_rows[missing]
            unique, inverse = np.unique(rows, axis=0, return_inverse=True)
            values = self._solve_batch(unique)
            for u in range(unique.shape[0]):
                self._table[unique[u].tobytes()] = float(values[u])
            out[np.asarray(missing)] = values[inverse]
            best = int(np.argmin(values))
            if values[best] < self.best_sse:
                self.best_sse = float(values[best])
                self.best_support = tuple(unique[best].tolist())
        return out

    def _solve_batch(self, supports: np.ndarray) -> np.ndarray:
        count, k = supports.shape
        t = self._xc.shape[0]
        out = np.empty(count)
        chunk = max(1, int(8_000_000 // max(1, t * k)))
        for start in range(0, count, chunk):
            block = supports[start:start + chunk]
            xs = self._xc[:, block]                       # (T, c, k)
            gram = np.einsum("tck,tcl->ckl", xs, xs, optimize=True)
            xty = np.einsum("tck,t->ck", xs, self._yc, optimize=True)
            try:
                beta = np.linalg.solve(gram, xty[..., None])[..., 0]
            except np.linalg.LinAlgError:
                beta = np.empty_like(xty)
                for i in range(block.shape[0]):
                    beta[i] = np.linalg.lstsq(gram[i], xty[i], rcond=None)[0]
            explained = np.einsum("ck,ck->c", xty, beta)
            out[start:start + chunk] = np.maximum(self._sst - explained, 0.0)
            self.n_solves += block.shape[0]
        return out


def marginal_r2_shares(problem: RegressionProblem, k: int) -> np.ndarray:
    """Normalized single-column R-squared values; uniform fallback when
    they are degenerate or too sparse to seat k draws."""
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = (problem.xc.T @ problem.yc) ** 2 / (problem.column_sq * problem.sst)
    scores = np.where(np.isfinite(scores), scores, 0.0)
    total = scores.sum()
    if total <= 0 or np.count_nonzero(scores) < k:
        return np.full(problem.n_cols, 1.0 / problem.n_cols)
    return scores / total


class InclusionDensity:
    """Sequential without-replacement draw with per-index shares q.

    The ordered tuple (i1, ..., ik) has probability
    prod_l q_{i_l} / (1 - q_{i_1} - ... - q_{i_{l-1}}): each draw
    renormalizes over what remains. Sampling uses the Gumbel-top-k
    equivalence, which is what keeps population draws vectorized.
    """

    def __init__(self, q: np.ndarray):
        q = np.asarray(q, dtype=np.float64)
        if q.ndim != 1 or np.any(q < 0) or not np.isclose(q.sum(), 1.0):
            raise ValueError("q must be a probability vector")
        self.q = q
        with np.errstate(divide="ignore"):
            self.log_q = np.log(np.maximum(q, 0.0))

    def sample(self, rng: np.random.Generator, n: int, k: int) -> np.ndarray:
        p = self.q.size
        if k > p:
            raise InvalidKError(f"k={k} exceeds {p} columns")
        keys = self.log_q[None, :] + rng.gumbel(size=(n, p))
        if k < p:
            part = np.argpartition(-keys, k - 1, axis=1)[:, :k]
        else:
            part = np.broadcast_to(np.arange(p), (n, p)).copy()
        part_keys = np.take_along_axis(keys, part, axis=1)
        order = np.argsort(-part_keys, axis=1, kind="stable")
        return np.take_along_axis(part, order, axis=1).astype(np.int64)

    def log_density(self, supports: np.ndarray) -> np.ndarray:
        supports = np.asarray(supports, dtype=np.int64)
        qs = self.q[supports]
        drawn_before = np.cumsum(qs, axis=1) - qs
        denominator = np.maximum(1.0 - drawn_before, TINY)
        return np.sum(np.log(np.maximum(qs, TINY)) - np.log(denominator), axis=1)


class WarmStartDensity:
    """Mixture initial law: add/trim of a previous solution plus fresh
    draws from the base shares.

    The add/trim branch T maps the previous support to size k by
    uniform removal (k smaller) or sequential q-draws appended after it
    (k larger); with k equal it returns the previous support itself.
    The mixture density warm_start_mix * T + (1 - warm_start_mix) * f0
    replaces f0 in the bridge weights and MH acceptance.
    """

    def __init__(self, base: InclusionDensity, previous: tuple[int, ...],
                 k: int, mix: float):
        self.base = base
        self.k = int(k)
        self.mix = float(mix)
        self.previous = np.asarray(previous, dtype=np.int64)
        p = base.q.size
        self._position = np.full(p, -1, dtype=np.int64)
        self._position[self.previous] = np.arange(self.previous.size)
        self._previous_mass = float(base.q[self.previous].sum())
        k_prev = self.previous.size
        if self.k < k_prev:
            self._log_choose = -(math.lgamma(k_prev + 1)
                                 - math.lgamma(self.k + 1)
                                 - math.lgamma(k_prev - self.k + 1))

    def sample(self, rng: np.random.Generator, n: int, k: int) -> np.ndarray:
        if k != self.k:
            raise InvalidKError(f"density built for k={self.k}, asked for {k}")
        out = np.empty((n, k), dtype=np.int64)
        warm = rng.random(n) < self.mix
        n_fresh = int(n - warm.sum())
        if n_fresh:
            out[~warm] = self.base.sample(rng, n_fresh, k)
        n_warm = int(warm.sum())
        if n_warm == 0:
            return out
        k_prev = self.previous.size
        if k == k_prev:
            out[warm] = self.previous
        elif k < k_prev:
            noise = rng.random((n_warm, k_prev))
            keep = np.sort(np.argsort(noise, axis=1)[:, :k], axis=1)
            out[warm] = self.previous[keep]
        else:
            keys = self.base.log_q[None, :] + rng.gumbel(size=(n_warm, self.base.q.size))
            keys[:, self.previous] = -np.inf
            extra = k - k_prev
            part = np.argpartition(-keys, extra - 1, axis=1)[:, :extra]
            part_keys = np.take_along_axis(keys, part, axis=1)
            order = np.argsort(-part_keys, axis=1, kind="stable")
            tail = np.take_along_axis(part, order, axis=1)
            warm_rows = np.flatnonzero(warm)
            out[warm_rows, :k_prev] = self.previous
            out[warm_rows, k_prev:] = tail
        return out

    def _log_trim_density(self, supports: np.ndarray) -> np.ndarray:
        n, k = supports.shape
        k_prev = self.previous.size
        if k == k_prev:
            match = (supports == self.previous[None, :]).all(axis=1)
            return np.where(match, 0.0, -np.inf)
        if k < k_prev:
            positions = self._position[supports]
            valid = (positions >= 0).all(axis=1)
            if k > 1:
                valid &= (np.diff(positions, axis=1) > 0).all(axis=1)
            return np.where(valid, self._log_choose, -np.inf)
        match = (supports[:, :k_prev] == self.previous[None, :]).all(axis=1)
        tail = supports[:, k_prev:]
        qs = self.base.q[tail]
        drawn_before = np.cumsum(qs, axis=1) - qs
        denominator = np.maximum(1.0 - self._previous_mass - drawn_before, TINY)
        seq = np.sum(np.log(np.maximum(qs, TINY)) - np.log(denominator), axis=1)
        return np.where(match, seq, -np.inf)

    def log_density(self, supports: np.ndarray) -> np.ndarray:
        supports = np.asarray(supports, dtype=np.int64)
        log_f0 = self.base.log_density(supports)
        log_t = self._log_trim_density(supports)
        return np.logaddexp(math.log(self.mix) + log_t,
                            math.log1p(-self.mix) + log_f0)


def effective_sample_size(log_weights: np.ndarray) -> float:
    shifted = log_weights - log_weights.max()
    w = np.exp(shifted)
    return float(w.sum() ** 2 / (w * w).sum())


def bridge_log_weights(state: TemperingState, gamma_next: float) -> np.ndarray:
    """Incremental importance weights for moving gamma to gamma_next."""
    return (gamma_next - state.gamma) * (-state.sses - state.log_init)


def choose_next_gamma(state: TemperingState, config: SmcConfig) -> float:
    """Largest admissible exponent: bisection keeps ESS above the floor.

    Returns exactly 1.0 once the full remaining step satisfies the
    bound; otherwise the bisection answer, floored at the minimum
    increment so the bridge always advances.
    """
    target = config.ess_fraction * state.n_particles
    remaining = 1.0 - state.gamma
    if remaining <= 0:
        return 1.0
    score = -state.sses - state.log_init

    def ess_at(step: float) -> float:
        return effective_sample_size(step * score)

    if ess_at(remaining) >= target:
        return 1.0
    low, high = 0.0, remaining
    while high - low > config.gamma_tolerance:
        mid = 0.5 * (low + high)
        if ess_at(mid) >= target:
            low = mid
        else:
            high = mid
    step = max(low, config.min_gamma_increment)
    return min(state.gamma + step, 1.0)


def resample(state: TemperingState, weights: np.ndarray,
             rng: np.random.Generator) -> TemperingState:
    """Systematic resampling: one uniform offset, M evenly spaced hits."""
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("weights must be positive and finite")
    cumulative = np.cumsum(weights / total)
    cumulative[-1] = 1.0
    m = state.n_particles
    positions = (rng.random() + np.arange(m)) / m
    indices = np.searchsorted(cumulative, positions, side="left")
    return replace(state,
                   supports=state.supports[indices].copy(),
                   sses=state.sses[indices].copy(),
                   log_init=state.log_init[indices].copy())


def _sequential_log_density(q: np.ndarray, elements: np.ndarray,
                            size_mask: np.ndarray, free_mass: np.ndarray) -> np.ndarray:
    """Log density of drawing `elements` in order from a pool with total
    share mass `free_mass`, without replacement. Padded slots are masked."""
    qs = np.where(size_mask, q[elements], 0.0)
    drawn_before = np.cumsum(qs, axis=1) - qs
    denominator = np.maximum(free_mass[:, None] - drawn_before, TINY)
    terms = np.log(np.maximum(qs, TINY)) - np.log(denominator)
    return np.sum(np.where(size_mask, terms, 0.0), axis=1)


def support_boost(state: TemperingState, cache: SseCache, config: SmcConfig,
                  rng: np.random.Generator,
                  max_moves: int | None = None,
                  boost_target: float | None = None) -> tuple[TemperingState, float]:
    """Metropolis-Hastings rejuvenation at the state's current exponent.

    Each move replaces a random block of every particle's support: the
    block size is uniform on {1, ..., max(1, ceil(k/2))}, the entries
    are redrawn without replacement from everything except the kept
    part, using a mixture of count-based shares (counts taken from the
    current population) and the initial shares. Acceptance follows the
    bridge target at the current exponent, with all densities in log
    space. Moves stop when mean acceptance probabilities accumulate to
    the boost target or the move cap is reached; the accumulated value
    is returned for diagnostics.
    """
    if max_moves is None:
        max_moves = config.max_moves
    if boost_target is None:
        boost_target = config.boost_target
    m, k = state.supports.shape
    p = state.density.q.size if not isinstance(state.density, WarmStartDensity) \
        else state.density.base.q.size
    base = state.density.base if isinstance(state.density, WarmStartDensity) else state.density
    q_init = np.maximum(base.q, 0.0)

    counts = np.bincount(state.supports.ravel(), minlength=p).astype(np.float64)
    q_count = counts / counts.sum()
    with np.errstate(divide="ignore"):
        log_q_count = np.log(q_count)
        log_q_init = np.log(q_init)

    supports = state.supports.copy()
    sses = state.sses.copy()
    log_init = state.log_init.copy()
    gamma = state.gamma
    omega = config.proposal_mix

    block_max = max(1, math.ceil(k / 2))
    cumulative_acceptance = 0.0
    for _ in range(max_moves):
        sizes = rng.integers(1, block_max + 1, size=m)
        slot_order = np.argsort(rng.random((m, k)), axis=1)
        replace_mask = np.zeros((m, k), dtype=bool)
        replace_mask[np.arange(m)[:, None], slot_order] = np.arange(k)[None, :] < sizes[:, None]

        # pool: everything except the kept part of each support
        pool = np.ones((m, p), dtype=bool)
        kept = np.where(replace_mask, -1, supports)
        rows = np.repeat(np.arange(m), k)
        flat_kept = kept.ravel()
        keep_rows = flat_kept >= 0
        pool[rows[keep_rows], flat_kept[keep_rows]] = False

        use_count = rng.random(m) < omega
        keys = np.where(use_count[:, None], log_q_count[None, :], log_q_init[None, :]) \
            + rng.gumbel(size=(m, p))
        keys[~pool] = -np.inf
        part = np.argpartition(-keys, block_max - 1, axis=1)[:, :block_max] if block_max < p \
            else np.broadcast_to(np.arange(p), (m, p)).copy()
        part_keys = np.take_along_axis(keys, part, axis=1)
        order = np.argsort(-part_keys, axis=1, kind="stable")
        drawn = np.take_along_axis(part, order, axis=1)[:, :block_max]

        size_mask = np.arange(block_max)[None, :] < sizes[:, None]
        # replaced positions in ascending order receive draws in draw order
        position_index = np.nonzero(replace_mask)
        new_supports = supports.copy()
        new_supports[position_index] = drawn[size_mask]
        old_elements = np.zeros_like(drawn)
        old_elements[size_mask] = supports[position_index]

        # proposal densities under both branches, forward and reverse
        kept_mass_init = np.where(~replace_mask, q_init[supports], 0.0).sum(axis=1)
        kept_mass_count = np.where(~replace_mask, q_count[supports], 0.0).sum(axis=1)
        free_init = np.maximum(1.0 - kept_mass_init, TINY)
        free_count = np.maximum(1.0 - kept_mass_count, TINY)

        log_mix = math.log(omega) if omega > 0 else -np.inf
        log_mix_c = math.log1p(-omega) if omega < 1 else -np.inf

        def mixture(elements):
            count_part = _sequential_log_density(q_count, elements, size_mask, free_count)
            init_part = _sequential_log_density(q_init, elements, size_mask, free_init)
            return np.logaddexp(log_mix + count_part, log_mix_c + init_part)

        log_forward = mixture(drawn)
        log_reverse = mixture(old_elements)

        new_sses = cache.evaluate(new_supports)
        new_log_init = state.density.log_density(new_supports)

        # at gamma 1 the initial-law term vanishes; dropping it explicitly
        # avoids 0 * inf when a proposal has zero initial density
        if gamma < 1.0:
            init_term = (1.0 - gamma) * (new_log_init - log_init)
        else:
            init_term = 0.0
        log_ratio = -gamma * (new_sses - sses) + init_term + log_reverse - log_forward
        acceptance = np.minimum(1.0, np.exp(np.minimum(log_ratio, 0.0)))
        accept = rng.random(m) < acceptance
        supports[accept] = new_supports[accept]
        sses[accept] = new_sses[accept]
        log_init[accept] = new_log_init[accept]

        cumulative_acceptance += float(acceptance.mean())
        if cumulative_acceptance >= boost_target:
            break

    new_state = replace(state, supports=supports, sses=sses, log_init=log_init)
    return new_state, cumulative_acceptance


def _validate_k(problem: RegressionProblem, k: int) -> int:
    k = int(k)
    if k < 1 or k > problem.n_cols or k >= problem.n_rows:
        raise InvalidKError(
            f"k={k} invalid for T={problem.n_rows}, p={problem.n_cols}")
    return k


def initial_sample(problem: RegressionProblem, k: int, config: SmcConfig,
                   rng: np.random.Generator) -> tuple[TemperingState, SseCache]:
    """Population draw from the marginal-R2 initial law at gamma = 0."""
    k = _validate_k(problem, k)
    density = InclusionDensity(marginal_r2_shares(problem, k))
    supports = density.sample(rng, config.n_particles, k)
    cache = SseCache(problem)
    sses = cache.evaluate(supports)
    return TemperingState(0.0, supports, sses, density.log_density(supports), density), cache


def add_trim(previous: SubsetModel, k: int, problem: RegressionProblem,
             config: SmcConfig, rng: np.random.Generator) -> tuple[TemperingState, SseCache]:
    """Warm-started population: mixture of add/trim moves on a previous
    solution's support and fresh draws from the marginal-R2 law."""
    k = _validate_k(problem, k)
    if previous.solver != SOLVER_SMC:
        raise ValueError(f"warm start requires a {SOLVER_SMC!r} model, got {previous.solver!r}")
    base = InclusionDensity(marginal_r2_shares(problem, k))
    density = WarmStartDensity(base, previous.support, k, config.warm_start_mix)
    supports = density.sample(rng, config.n_particles, k)
    cache = SseCache(problem)
    sses = cache.evaluate(supports)
    return TemperingState(0.0, supports, sses, density.log_density(supports), density), cache


def smc_best_subset(problem: RegressionProblem, k: int,
                    config: SmcConfig | None = None,
                    warm_start: SubsetModel | None = None,
                    rng: np.random.Generator | None = None) -> tuple[SubsetModel, SmcDiagnostics]:
    """Full tempering run; returns the best support ever evaluated.

    The bridge advances until the exponent reaches exactly 1, boosting
    after every resample. The final population is then duplicated and
    boosted once more, to give the sampler a last chance to visit new
    supports, and the OLS refit of the overall best support is returned.
    """
    if config is None:
        config = SmcConfig()
    if rng is None:
        rng = derive_rng(config.seed, "smc", k)
    k = _validate_k(problem, k)
    if k == 1:
        # single-column case is exact: scan every marginal fit
        with np.errstate(invalid="ignore", divide="ignore"):
            gains = (problem.xc.T @ problem.yc) ** 2 / problem.column_sq
        gains = np.where(np.isfinite(gains), gains, -np.inf)
        best = int(np.argmax(gains))
        model = refit_model(problem, (best,), SOLVER_SMC)
        return model, SmcDiagnostics(rounds=[RoundRecord(1.0, float(config.n_particles),
                                                         1, model.sse, 0.0)],
                                     n_solves=problem.n_cols)
    if warm_start is None:
        state, cache = initial_sample(problem, k, config, rng)
    else:
        state, cache = add_trim(warm_start, k, problem, config, rng)

    diagnostics = SmcDiagnostics()
    while state.gamma < 1.0:
        gamma_next = choose_next_gamma(state, config)
        log_weights = bridge_log_weights(state, gamma_next)
        ess = effective_sample_size(log_weights)
        shifted = np.exp(log_weights - log_weights.max())
        state = resample(state, shifted, rng)
        state = replace(state, gamma=gamma_next)
        state, acceptance = support_boost(state, cache, config, rng)
        distinct = np.unique(np.sort(state.supports, axis=1), axis=0).shape[0]
        diagnostics.rounds.append(RoundRecord(gamma_next, ess, distinct,
                                              cache.best_sse, acceptance))

    doubled = replace(state,
                      supports=np.vstack([state.supports, state.supports]),
                      sses=np.concatenate([state.sses, state.sses]),
                      log_init=np.concatenate([state.log_init, state.log_init]))
    doubled, acceptance = support_boost(doubled, cache, config, rng)
    distinct = np.unique(np.sort(doubled.supports, axis=1), axis=0).shape[0]
    diagnostics.rounds.append(RoundRecord(1.0, float(doubled.n_particles), distinct,
                                          cache.best_sse, acceptance))
    diagnostics.n_solves = cache.n_solves

    model = refit_model(problem, cache.best_support, SOLVER_SMC)
    return model, diagnostics
