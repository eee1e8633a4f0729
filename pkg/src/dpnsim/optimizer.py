"""Genetic search over grant subsets for a single round's allocation.

A chromosome is a bit mask over the pending-request list. The initial
population always contains both greedy masks and the best chromosome seen is
never lost, so the result is at least as fit as either greedy policy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .allocation import NOT_QUEUED, AllocationResult, PendingRequest, _arrays, greedy_mask, result_from_mask
from .core import ENERGY_TOL, AllocationPolicy, GaParams


def queue_ages(seniority: np.ndarray, current_round: int | None) -> np.ndarray:
    """Rounds each queued request has waited; 0 for fresh requests."""
    queued = seniority != NOT_QUEUED
    if current_round is None:
        current_round = int(seniority[queued].max()) + 1 if queued.any() else 0
    ages = np.zeros(len(seniority), dtype=float)
    ages[queued] = np.maximum(current_round - seniority[queued], 1)
    return ages


def population_fitness(
    masks: np.ndarray,
    amounts: np.ndarray,
    ages: np.ndarray,
    cap: float,
    weights: Sequence[float],
) -> np.ndarray:
    """Vectorised fitness of a (population x requests) boolean matrix.

    energy share of the cap + share of requests granted + share of the total
    queue age that is granted; infeasible rows score -inf.
    """
    masks = np.atleast_2d(masks)
    w_energy, w_count, w_age = weights
    # einsum reduces each row on its own; BLAS matmul may round differently
    # depending on how many rows share the call
    m = masks.astype(float)
    sums = np.einsum("ij,j->i", m, amounts)
    n = len(amounts)
    score = np.zeros(len(masks))
    if cap > 0 and np.isfinite(cap):
        score += w_energy * sums / cap
    if n:
        score += w_count * masks.sum(axis=1) / n
    age_total = ages.sum()
    if age_total > 0:
        score += w_age * np.einsum("ij,j->i", m, ages) / age_total
    score[sums > cap + ENERGY_TOL] = -np.inf
    return score


def fitness(
    mask: Sequence[bool],
    pending: Sequence[PendingRequest],
    cap: float,
    weights: Sequence[float],
    current_round: int | None = None,
) -> float:
    amounts, seniority, _ = _arrays(pending)
    ages = queue_ages(seniority, current_round)
    mask = np.asarray(mask, dtype=bool).reshape(1, -1)
    return float(population_fitness(mask, amounts, ages, cap, weights)[0])


def _random_feasible(rng, amounts, cap, count):
    """Random-order greedy fills: a feasible, diverse starting population."""
    n = len(amounts)
    keys = rng.random((count, n))
    order = np.argsort(keys, axis=1)
    running = np.cumsum(amounts[order], axis=1)
    keep = running <= cap + ENERGY_TOL
    out = np.zeros((count, n), dtype=bool)
    np.put_along_axis(out, order, keep, axis=1)
    return out


def _repair(rng, masks, amounts, cap):
    """Drop granted requests in random order until each row fits under cap.

    One random order per call is shared by all rows; rows differ in which
    requests they hold, so they still keep different subsets.
    """
    sums = np.einsum("ij,j->i", masks, amounts)
    bad = np.flatnonzero(sums > cap + ENERGY_TOL)
    if bad.size == 0:
        return masks
    perm = rng.permutation(len(amounts))
    sub = masks[np.ix_(bad, perm)]
    running = np.cumsum(sub * amounts[perm], axis=1)
    masks[np.ix_(bad, perm)] = sub & (running <= cap + ENERGY_TOL)
    return masks


def _fill(masks, amounts, cap):
    """Add ungranted requests smallest first while they fit.

    ``amounts`` must be sorted ascending. Once one candidate misses, every
    larger one does too, so a single prefix pass leaves no request that
    could still be added.
    """
    room = cap + ENERGY_TOL - np.einsum("ij,j->i", masks, amounts)
    # requests larger than the largest room can never be added
    k = int(np.searchsorted(amounts, room.max(), side="right"))
    if k == 0:
        return masks
    free = ~masks[:, :k]
    running = np.cumsum(free * amounts[:k], axis=1)
    masks[:, :k] |= free & (running <= room[:, None])
    return masks


def _mutate(rng, masks, rate):
    """Flip each bit independently with probability ``rate``.

    Flip positions are drawn as geometric gaps, so the cost follows the
    number of flips rather than the number of bits.
    """
    masks = np.ascontiguousarray(masks)
    flat = masks.reshape(-1)
    size = flat.size
    if rate <= 0 or size == 0:
        return masks
    last = -1
    batch = int(size * rate * 1.2) + 16
    while True:
        pos = last + np.cumsum(rng.geometric(rate, batch))
        flat[pos[pos < size]] ^= True
        if pos[-1] >= size:
            return masks
        last = int(pos[-1])


def _duplicate_rows(masks):
    """Indices of rows equal to an earlier row."""
    seen = set()
    dup = []
    for i, key in enumerate(map(bytes, np.packbits(masks, axis=1))):
        if key in seen:
            dup.append(i)
        else:
            seen.add(key)
    return np.asarray(dup, dtype=np.intp)


@dataclass
class GaOutcome:
    mask: np.ndarray
    fitness: float
    history: list[float] = field(default_factory=list)


def ga_mask(
    amounts: np.ndarray,
    cap: float,
    params: GaParams,
    rng: np.random.Generator,
    seniority: np.ndarray | None = None,
    user_ids: np.ndarray | None = None,
    current_round: int | None = None,
) -> GaOutcome:
    """Evolve a grant mask; ``history`` holds the best fitness after each generation."""
    amounts = np.asarray(amounts, dtype=float)
    n = len(amounts)
    if seniority is None:
        seniority = np.full(n, NOT_QUEUED, dtype=np.int64)
    ages = queue_ages(seniority, current_round)
    weights = params.fitness_weights
    pop_size = params.population_size
    # topping up can only help when no fitness term penalises a grant
    fill = min(weights) >= 0 and np.isfinite(cap)
    seeds = np.array([
        greedy_mask(amounts, cap, AllocationPolicy.SMALLEST_FIRST, seniority, user_ids),
        greedy_mask(amounts, cap, AllocationPolicy.LARGEST_FIRST, seniority, user_ids),
    ])
    # genes are kept in ascending amount order so topping up works on a prefix
    order = np.argsort(amounts, kind="stable")
    original = (amounts, ages)
    amounts, ages, seeds = amounts[order], ages[order], seeds[:, order]

    def evaluate(p):
        return population_fitness(p, amounts, ages, cap, weights)

    def unsorted(mask):
        out = np.empty_like(mask)
        out[order] = mask
        return out

    def finish(candidates, history):
        # rescore in the caller's gene order so the result compares exactly
        # with fitness computed there; the first candidate wins ties
        masks = np.array([unsorted(m) for m in candidates])
        scores = population_fitness(masks, *original, cap, weights)
        i = int(np.argmax(scores))
        return GaOutcome(masks[i], float(scores[i]), history)

    seed_fit = evaluate(seeds)
    # nothing to choose: everything fits and no weight penalises a grant
    if n == 0 or (min(weights) >= 0 and amounts.sum() <= cap + ENERGY_TOL):
        return finish(seeds[:1], [float(seed_fit[0])] * (params.generations + 1))
    seeds = seeds[np.argsort(-seed_fit, kind="stable")][:pop_size]
    extra = pop_size - len(seeds)
    if extra > 0:
        rand = _random_feasible(rng, amounts, cap, extra)
        if fill:
            rand = _fill(rand, amounts, cap)
        pop = np.vstack([seeds, rand])
    else:
        pop = seeds
    fit = evaluate(pop)

    best_i = int(np.argmax(fit))
    best_mask, best_fit = pop[best_i].copy(), float(fit[best_i])
    history = [best_fit]

    n_children = pop_size - params.elitism
    for _ in range(params.generations):
        elite_idx = np.argsort(-fit, kind="stable")[: params.elitism]
        # tournament selection: two parents per child
        contenders = rng.integers(0, pop_size, size=(2 * n_children, params.tournament_size))
        winners = contenders[np.arange(len(contenders)), np.argmax(fit[contenders], axis=1)]
        mothers = pop[winners[:n_children]]
        fathers = pop[winners[n_children:]]
        # single-point crossover
        do_cross = rng.random(n_children) < params.crossover_rate
        points = rng.integers(1, max(n, 2), size=n_children)
        take_father = (np.arange(n)[None, :] >= points[:, None]) & do_cross[:, None]
        children = (take_father & fathers) | (~take_father & mothers)
        # per-bit mutation
        children = _mutate(rng, children, params.mutation_rate)
        children = _repair(rng, children, amounts, cap)
        if fill:
            children = _fill(children, amounts, cap)

        pop = np.vstack([pop[elite_idx], children])
        # duplicates add nothing; swap them for fresh random individuals
        dup = _duplicate_rows(pop)
        if dup.size:
            fresh = _random_feasible(rng, amounts, cap, dup.size)
            pop[dup] = _fill(fresh, amounts, cap) if fill else fresh
        fit = evaluate(pop)
        i = int(np.argmax(fit))
        if fit[i] > best_fit:
            best_mask, best_fit = pop[i].copy(), float(fit[i])
        history.append(best_fit)
    return finish([best_mask, seeds[0]], history)


def ga_allocate(
    pending: Sequence[PendingRequest],
    cap: float,
    params: GaParams,
    rng: np.random.Generator,
    current_round: int | None = None,
) -> AllocationResult:
    if not pending:
        return AllocationResult({}, [], cap)
    amounts, seniority, ids = _arrays(pending)
    out = ga_mask(amounts, cap, params, rng, seniority, ids, current_round)
    return result_from_mask(pending, out.mask, cap)


@dataclass
class BenchmarkReport:
    n_pending: int
    greedy_time: float
    ga_time: float
    greedy_fitness: float
    ga_fitness: float


def ga_benchmark(
    pending: Sequence[PendingRequest],
    cap: float,
    params: GaParams,
    rng: np.random.Generator,
    current_round: int | None = None,
) -> BenchmarkReport:
    """Wall-clock and fitness of the better greedy policy versus the GA."""
    amounts, seniority, ids = _arrays(pending)
    ages = queue_ages(seniority, current_round)
    t0 = time.perf_counter()
    greedy = np.array([
        greedy_mask(amounts, cap, policy, seniority, ids)
        for policy in (AllocationPolicy.SMALLEST_FIRST, AllocationPolicy.LARGEST_FIRST)
    ])
    greedy_fit = float(population_fitness(greedy, amounts, ages, cap, params.fitness_weights).max())
    t1 = time.perf_counter()
    out = ga_mask(amounts, cap, params, rng, seniority, ids, current_round)
    t2 = time.perf_counter()
    return BenchmarkReport(len(pending), t1 - t0, t2 - t1, greedy_fit, out.fitness)
