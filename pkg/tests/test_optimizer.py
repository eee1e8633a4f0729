import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpnsim.allocation import NOT_QUEUED, PendingRequest, greedy_mask
from dpnsim.core import AllocationPolicy, GaParams
from dpnsim.optimizer import (
    _fill,
    _mutate,
    _repair,
    fitness,
    ga_allocate,
    ga_benchmark,
    ga_mask,
    population_fitness,
    queue_ages,
)
from dpnsim.presets import TABLE1_REQUESTS

FAST = GaParams(population_size=30, generations=15)


def _table1():
    return [PendingRequest(u + 1, a) for u, a in enumerate(TABLE1_REQUESTS) if a > 0]


def test_fitness_examples():
    pending = _table1()
    w = (1.0, 0.0, 0.0)
    assert fitness([False] * 5, pending, 3.0, w) == 0.0
    assert fitness([True] * 5, pending, 2.0, w) == -np.inf
    mask = [p.user_id in (9, 4, 7, 1) for p in pending]
    assert fitness(mask, pending, 3.0, w) == pytest.approx(2.5187 / 3, abs=1e-12)


def test_fitness_terms():
    pending = [PendingRequest(1, 0.5, 2), PendingRequest(2, 0.5), PendingRequest(3, 1.0, 0)]
    # ages at round 4: user 1 waited 2, user 3 waited 4
    mask = [True, True, False]
    assert fitness(mask, pending, 2.0, (0.0, 1.0, 0.0), 4) == pytest.approx(2 / 3)
    assert fitness(mask, pending, 2.0, (0.0, 0.0, 1.0), 4) == pytest.approx(2 / 6)
    assert fitness(mask, pending, 2.0, (1.0, 0.0, 0.0), 4) == pytest.approx(0.5)


def test_all_fit_grants_everything():
    pending = [PendingRequest(i, 0.2) for i in range(5)]
    res = ga_allocate(pending, 2.0, FAST, np.random.default_rng(0))
    assert set(res.grants) == set(range(5)) and res.newly_queued == []


def test_table1_not_worse_than_largest_first():
    res = ga_allocate(_table1(), 3.0, GaParams(), np.random.default_rng(0))
    assert res.granted_total / 3.0 >= 2.5187 / 3 - 1e-12
    assert res.granted_total <= 3.0 + 1e-9


def _greedy_best(amounts, cap, seniority, ids, w, t):
    ages = queue_ages(seniority, t)
    masks = np.array([greedy_mask(amounts, cap, p, seniority, ids)
                      for p in (AllocationPolicy.SMALLEST_FIRST, AllocationPolicy.LARGEST_FIRST)])
    return population_fitness(masks, amounts, ages, cap, w).max()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([(1, 0, 0), (0.4, 0.2, 0.4), (0, 1, 0), (0.2, 0.3, -0.1)]))
def test_dominance_feasibility_monotone_history(seed, w):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    amounts = 1.0 - rng.random(n)
    seniority = np.where(rng.random(n) < 0.4, rng.integers(0, 5, n), NOT_QUEUED)
    ids = np.arange(n)
    cap = float(rng.uniform(0, amounts.sum()))
    params = GaParams(population_size=20, generations=10, fitness_weights=w)
    out = ga_mask(amounts, cap, params, rng, seniority, ids, 6)
    assert out.fitness >= _greedy_best(amounts, cap, seniority, ids, w, 6)
    assert amounts[out.mask].sum() <= cap + 1e-9
    assert all(b >= a for a, b in zip(out.history, out.history[1:]))
    assert len(out.history) == params.generations + 1


def test_degenerate_ga_equals_greedy():
    rng = np.random.default_rng(1)
    pending = [PendingRequest(i, float(a)) for i, a in enumerate(1.0 - rng.random(40))]
    params = GaParams(population_size=1, generations=0, elitism=0)
    rep = ga_benchmark(pending, 8.0, params, np.random.default_rng(2))
    assert rep.ga_fitness == rep.greedy_fitness


def _bits(n):
    return ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)


def test_n12_never_beats_brute_force():
    rng = np.random.default_rng(5)
    amounts = 1.0 - rng.random(12)
    cap = 0.6 * amounts.sum()
    ages = np.zeros(12)
    optimum = population_fitness(_bits(12), amounts, ages, cap, (1, 0, 0)).max()
    pending = [PendingRequest(i, float(a)) for i, a in enumerate(amounts)]
    rep = ga_benchmark(pending, cap, GaParams(), np.random.default_rng(0))
    assert rep.greedy_fitness <= rep.ga_fitness <= optimum + 1e-12


def test_benchmark_500_users_cap_200():
    rng = np.random.default_rng(7)
    amounts = 1.0 - rng.random(500)
    pending = [PendingRequest(i, float(a)) for i, a in enumerate(amounts)]
    rep = ga_benchmark(pending, 200.0, GaParams(generations=20), np.random.default_rng(0))
    assert rep.n_pending == 500
    assert rep.ga_fitness >= rep.greedy_fitness
    assert rep.ga_time > 0 and rep.greedy_time > 0


def test_seeded_runs_repeat():
    rng = np.random.default_rng(3)
    amounts = 1.0 - rng.random(80)
    a = ga_mask(amounts, 20.0, FAST, np.random.default_rng(9))
    b = ga_mask(amounts, 20.0, FAST, np.random.default_rng(9))
    assert np.array_equal(a.mask, b.mask) and a.history == b.history


def test_empty_pending():
    out = ga_mask(np.zeros(0), 5.0, FAST, np.random.default_rng(0))
    assert out.mask.size == 0 and out.fitness == 0.0


def test_mutation_flips_at_the_requested_rate():
    masks = np.zeros((400, 500), dtype=bool)
    out = _mutate(np.random.default_rng(0), masks, 0.01)
    # 2000 expected flips, sd about 44
    assert abs(int(out.sum()) - 2000) < 200
    assert not _mutate(np.random.default_rng(0), np.zeros((3, 4), dtype=bool), 0.0).any()
    assert _mutate(np.random.default_rng(0), np.zeros((3, 4), dtype=bool), 1.0).all()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_repair_then_fill_is_feasible_and_maximal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    amounts = np.sort(1 - rng.random(n))
    cap = float(rng.uniform(0, amounts.sum()))
    masks = rng.random((8, n)) < 0.6
    masks = _fill(_repair(rng, masks, amounts, cap), amounts, cap)
    sums = masks.astype(float) @ amounts
    assert np.all(sums <= cap + 1e-9)
    for row, used in zip(masks, sums):
        free = amounts[~row]
        # nothing left out would still fit
        assert free.size == 0 or free.min() > cap + 1e-9 - used
