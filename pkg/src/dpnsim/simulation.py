"""Round orchestration: attrition, demand, allocation, storage, bookkeeping.

The world is held as flat per-user arrays so a 500-user round costs a handful
of numpy calls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import storage as st
from .allocation import NOT_QUEUED, greedy_mask
from .core import AllocationPolicy, DemandParams, GridConfig, RngStreams, config_to_dict, validate_config
from .demand import draw_requests, stationary_on_probability
from .metrics import RoundMetrics, RunAccumulator, SummaryTable, aggregate, record_round
from .optimizer import ga_mask

NEVER = -1


@dataclass
class World:
    config: GridConfig
    rng: RngStreams
    requests: np.ndarray
    queued_since: np.ndarray  # NEVER when not queued
    special: np.ndarray
    battery: st.StorageUnit | None
    round: int = 0
    # per-user bookkeeping for wait statistics
    ever_queued: np.ndarray = None
    satisfied_from_queue: np.ndarray = None
    asked_battery: np.ndarray = None
    served_by_battery: np.ndarray = None
    acc: RunAccumulator = None
    last_round: "LastRound | None" = None

    @classmethod
    def initial(cls, config: GridConfig, replica: int = 0) -> "World":
        n = config.n_users
        special = np.zeros(n, dtype=bool)
        special[: config.n_special_users] = True
        rng = RngStreams(config.seed, replica)
        requests = np.zeros(n)
        if config.initial_state == "stationary":
            requests = initial_requests(n, config.demand, rng.demand)
        battery = None
        if config.battery is not None:
            battery = st.StorageUnit(config.battery_capacity, config.battery_initial_charge)
        return cls(
            config=config,
            rng=rng,
            requests=requests,
            queued_since=np.full(n, NEVER, dtype=np.int64),
            special=special,
            battery=battery,
            ever_queued=np.zeros(n, dtype=bool),
            satisfied_from_queue=np.zeros(n, dtype=bool),
            asked_battery=np.zeros(n, dtype=bool),
            served_by_battery=np.zeros(n, dtype=bool),
            acc=RunAccumulator(config_key(config)),
        )

    @property
    def queued(self) -> np.ndarray:
        return self.queued_since != NEVER

    def queue_order(self) -> np.ndarray:
        """User ids in the queue, oldest first (ties by user id)."""
        ids = np.flatnonzero(self.queued)
        return ids[np.lexsort((ids, self.queued_since[ids]))]


def initial_requests(n: int, params: DemandParams, rng: np.random.Generator) -> np.ndarray:
    """Each user ON with the chain's stationary probability, holding a fresh request."""
    try:
        p_on = stationary_on_probability(params)
    except ValueError:
        p_on = 0.0
    on = rng.random(n) < p_on
    amounts = params.max_request_per_user * (1.0 - rng.random(n))
    return np.where(on, amounts, 0.0)


@dataclass
class LastRound:
    """Per-user view of the most recent round (all arrays indexed by user id).

    ``queued`` marks requests the grid left unserved, including those a
    secondary source then covered.
    """

    requests: np.ndarray
    grid: np.ndarray
    queued: np.ndarray
    storage: np.ndarray


def _scatter(n, idx, values, dtype=float):
    out = np.zeros(n, dtype=dtype)
    out[idx] = values
    return out


def config_key(config: GridConfig) -> str:
    d = config_to_dict(config)
    d.pop("seed", None)
    return json.dumps(d, sort_keys=True)


def round_step(world: World, injected: np.ndarray | None = None) -> RoundMetrics:
    """Advance ``world`` by one round and return that round's counters.

    ``injected`` replaces the demand draw with explicit per-user requests
    (0 = not requesting) for every user that is not queued.
    """
    cfg = world.config
    rng = world.rng
    t = world.round
    n = cfg.n_users
    waits = world.acc.waits
    m = RoundMetrics(round=t)

    # 1. queue attrition (one draw per user keeps streams aligned across runs)
    survive = rng.queue.random(n) < cfg.p_stay_queue
    queued = world.queued
    dropped = queued & ~survive
    for s in t - world.queued_since[dropped]:
        waits.rounds_in_queue.push(float(s))
    world.queued_since[dropped] = NEVER
    world.requests[dropped] = 0.0
    m.customers_dropped_from_queue = int(dropped.sum())
    queued = world.queued
    if cfg.p_change_queue_status > 0:
        redraw = queued & (rng.queue.random(n) < cfg.p_change_queue_status)
        fresh = cfg.demand.max_request_per_user * (1.0 - rng.queue.random(n))
        world.requests[redraw] = fresh[redraw]

    # 2. demand on users outside the queue
    if injected is None:
        world.requests = draw_requests(world.requests, queued, cfg.demand, rng.demand).requests
    else:
        inj = np.asarray(injected, dtype=float)
        world.requests = np.where(queued, world.requests, inj)
    m.users_on = int(np.count_nonzero(world.requests > 0))

    # 3. merge new and queued requests into one candidate pool
    pend = np.flatnonzero(world.requests > 0)
    amounts = world.requests[pend]
    was_queued = queued[pend]
    seniority = np.where(was_queued, world.queued_since[pend], NOT_QUEUED)
    m.customers_requested = len(pend)
    m.energy_requested = float(amounts.sum())

    # solar output lands before allocation: battery first, overflow raises the cap
    bonus = 0.0
    if cfg.solar is not None and world.battery is not None:
        produced, world.battery, bonus = st.solar_step(cfg.solar, world.battery, rng.solar)
        m.solar_produced = produced
        m.grid_bonus = bonus
    cap = cfg.energy_cap + bonus
    m.effective_cap = cap

    # 4. grid allocation
    if cfg.policy is AllocationPolicy.GENETIC and len(pend):
        mask = ga_mask(amounts, cap, cfg.ga_params, rng.ga, seniority, pend, t).mask
    else:
        mask = greedy_mask(amounts, cap, cfg.policy, seniority, pend)
    m.energy_distributed = float(amounts[mask].sum())
    m.surplus = max(cap - m.energy_distributed, 0.0) if np.isfinite(cap) else 0.0

    # 5. storage serves queued special users, then absorbs the grid surplus
    denied = ~mask
    served = np.zeros(len(pend), dtype=bool)
    if world.battery is not None:
        ask = denied & world.special[pend]
        m.customers_requested_battery = int(ask.sum())
        m.battery_requested = float(amounts[ask].sum())
        m.battery_available = world.battery.charge
        if ask.any() and world.battery.charge > 0:
            idx = np.flatnonzero(ask)
            sub = st.discharge_mask(amounts[idx], world.battery.charge, cfg.policy, seniority[idx], pend[idx])
            served[idx[sub]] = True
            given = float(amounts[served].sum())
            world.battery = st.StorageUnit(world.battery.capacity, max(world.battery.charge - given, 0.0))
            m.battery_distributed = given
        world.asked_battery[pend[ask]] = True
        world.served_by_battery[pend[served]] = True
        for u in pend[served]:
            q = world.queued_since[u]
            waits.battery_wait.push(float(t - q) if q != NEVER else 0.0)
        if cfg.solar is None:
            world.battery, m.battery_absorbed = st.charge(world.battery, m.surplus)
        m.customers_received_battery = int(served.sum())

    # 6. queue update and counters
    granted = mask | served
    leaving = pend[granted & was_queued]
    for s in t - world.queued_since[leaving]:
        waits.rounds_in_queue.push(float(s))
        waits.rounds_to_satisfaction.push(float(s + 1))
    world.satisfied_from_queue[leaving] = True
    world.queued_since[leaving] = NEVER
    entering = pend[~granted & ~was_queued]
    world.queued_since[entering] = t
    world.ever_queued[entering] = True

    m.customers_received = int(granted.sum())
    m.customers_satisfied_from_queue = int((granted & was_queued).sum())
    m.customers_entered_queue = int((~mask & ~was_queued).sum())
    m.customers_in_queue = int(world.queued.sum())
    m.total_delivered = m.energy_distributed + m.battery_distributed
    waits.queue_rounds_total += m.customers_in_queue
    world.last_round = LastRound(
        requests=_scatter(n, pend, amounts),
        grid=_scatter(n, pend, np.where(mask, amounts, 0.0)),
        queued=_scatter(n, pend, ~mask, dtype=bool),
        storage=_scatter(n, pend, np.where(served, amounts, 0.0)),
    )

    record_round(m, world.acc)
    world.round += 1
    return m


def finish_run(world: World) -> RunAccumulator:
    """Close open queue stints (counted up to the last round) and end-of-run counts."""
    waits = world.acc.waits
    q = world.queued
    for s in world.round - world.queued_since[q]:
        waits.rounds_in_queue.push(float(s))
    waits.not_satisfied_at_end = int(q.sum())
    waits.never_satisfied_in_queue = int((world.ever_queued & ~world.satisfied_from_queue).sum())
    waits.never_satisfied_by_battery = int((world.asked_battery & ~world.served_by_battery).sum())
    waits.users_ever_queued = int(world.ever_queued.sum())
    return world.acc


@dataclass
class RunResult:
    rounds: list[RoundMetrics]
    accumulator: RunAccumulator
    world: World


def run_simulation(config: GridConfig, replica: int = 0, injected=None) -> RunResult:
    """One trajectory of ``config.n_rounds`` rounds.

    ``injected``, if given, is a sequence of per-round request vectors used in
    place of the demand draws (rounds beyond its length fall back to draws).
    """
    world = World.initial(config, replica)
    rows = []
    for r in range(config.n_rounds):
        inj = injected[r] if injected is not None and r < len(injected) else None
        m = round_step(world, inj)
        m.simulation = replica
        rows.append(m)
    finish_run(world)
    return RunResult(rows, world.acc, world)


@dataclass
class ExperimentResult:
    config: GridConfig
    runs: list[RunResult] = field(default_factory=list)

    @property
    def rounds(self) -> list[RoundMetrics]:
        return [m for r in self.runs for m in r.rounds]

    def summary(self) -> SummaryTable:
        return aggregate([r.accumulator for r in self.runs])


def run_experiment(config: GridConfig, injected=None, workers: int = 1) -> ExperimentResult:
    """``config.n_simulations`` independent replicas, ordered by replica index."""
    validate_config(config)
    replicas = range(config.n_simulations)
    if workers > 1 and config.n_simulations > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_detached, [(config, r, injected) for r in replicas]))
    else:
        runs = [run_simulation(config, r, injected) for r in replicas]
    return ExperimentResult(config, runs)


def _run_detached(args) -> RunResult:
    return run_simulation(*args)
