"""Named scenarios reproducing the published experiments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AllocationPolicy,
    DemandParams,
    GaParams,
    GridConfig,
    SolarConfig,
    StorageConfig,
    validate_config,
)
from .metrics import SummaryTable
from .routing import RoutingParams
from .simulation import ExperimentResult, run_experiment

# Probability axis shared by every sweep: 0.0, 0.1, ..., 1.0
GRID = tuple(round(0.1 * i, 1) for i in range(11))
# Coarser axis for genetic-allocation sweeps, which cost far more per round
COARSE_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)

# Per-user requests of the 10-user micro-grid snapshot (0 = not requesting).
TABLE1_REQUESTS = (0.4974, 0.4869, 0.0, 0.5473, 0.0, 0.0, 0.5221, 0.0, 0.9519, 0.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    config: GridConfig
    sweep: bool = False
    grid: tuple[float, ...] = GRID
    routing: RoutingParams | None = None
    topology: str | None = None
    n_consumers: int = 0
    n_sources: int = 0


def _table2(battery: bool) -> GridConfig:
    return GridConfig(
        n_users=500,
        energy_cap=100.0,
        demand=DemandParams(0.5, 0.5),
        p_stay_queue=1.0,
        p_change_queue_status=0.0,
        policy=AllocationPolicy.SMALLEST_FIRST,
        n_special_users=50,
        battery=StorageConfig(capacity=10.0) if battery else None,
        n_rounds=50,
        n_simulations=50,
    )


def _table3(optimized: bool) -> GridConfig:
    cfg = _table2(True).replace(solar=SolarConfig(solar_cap=10.0, p_sun=0.5))
    if optimized:
        cfg = cfg.replace(
            policy=AllocationPolicy.GENETIC,
            ga=GaParams(fitness_weights=(0.4, 0.2, 0.4)),
        )
    return cfg


_FIG3 = GridConfig(
    n_users=500,
    energy_cap=150.0,
    p_stay_queue=0.1,
    policy=AllocationPolicy.SMALLEST_FIRST,
    n_rounds=50,
    n_simulations=10,
)

PRESETS: dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario("fig3", "500 users, cap 150, queue-stay 0.1, smallest-first; 11x11 probability sweep",
                 _FIG3, sweep=True),
        Scenario("fig4", "as fig3 with queue-stay 0.5",
                 _FIG3.replace(p_stay_queue=0.5), sweep=True),
        Scenario("fig5", "500 users, cap 250, largest-first; 11x11 probability sweep",
                 _FIG3.replace(energy_cap=250.0, p_stay_queue=0.5,
                               policy=AllocationPolicy.LARGEST_FIRST, n_rounds=100), sweep=True),
        Scenario("cap_two_thirds", "500 users, cap 333.3 (2/3 of peak demand); 11x11 probability sweep",
                 _FIG3.replace(energy_cap=333.3, p_stay_queue=0.5), sweep=True),
        Scenario("table1", "10-user micro-grid snapshot, cap 3, largest-first, shared 1-unit battery",
                 GridConfig(n_users=10, energy_cap=3.0, demand=DemandParams(0.3, 0.3),
                            policy=AllocationPolicy.LARGEST_FIRST, n_special_users=10,
                            battery=StorageConfig(capacity=1.0), n_rounds=1, n_simulations=1,
                            initial_state="off")),
        Scenario("table2_battery", "500 users, cap 100, 50 special users, 10-unit battery; 50x50 rounds",
                 _table2(True)),
        Scenario("table2_nobattery", "as table2_battery without the battery", _table2(False)),
        Scenario("table3_unopt", "table2_battery plus a 10-unit solar panel, greedy allocation",
                 _table3(False)),
        Scenario("table3_opt", "table3_unopt with genetic allocation", _table3(True)),
        Scenario("ga_fig6", "500 users, cap 200, 20-unit storage, 40 special users, genetic allocation; "
                 "5x5 probability sweep of 20x50 rounds",
                 GridConfig(n_users=500, energy_cap=200.0, demand=DemandParams(0.5, 0.5),
                            p_stay_queue=1.0, policy=AllocationPolicy.GENETIC, n_special_users=40,
                            battery=StorageConfig(capacity=20.0), ga=GaParams(fitness_weights=(0.4, 0.2, 0.4)),
                            n_rounds=50, n_simulations=20),
                 sweep=True, grid=COARSE_GRID),
        Scenario("ieee39", "IEEE 39-bus energy routing snapshot: 2 sources, 12 consumers, 5 users per source",
                 GridConfig(n_users=39, energy_cap=100.0, n_rounds=1),
                 routing=RoutingParams(), topology="ieee39", n_consumers=12, n_sources=2),
    )
}


def list_presets() -> dict[str, str]:
    return {name: s.description for name, s in PRESETS.items()}


def get_preset(name: str) -> Scenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def check_presets() -> None:
    for s in PRESETS.values():
        validate_config(s.config)


@dataclass
class SweepPoint:
    p_request: float
    p_stay_on: float
    result: ExperimentResult
    summary: SummaryTable = field(repr=False, default=None)


def _sweep_point(args) -> SweepPoint:
    config, pr, ps = args
    cfg = dataclasses.replace(config, demand=dataclasses.replace(config.demand, p_request=pr, p_stay_on=ps))
    res = run_experiment(cfg)
    return SweepPoint(pr, ps, res, res.summary())


def run_sweep(config: GridConfig, grid=GRID, workers: int = 1) -> list[SweepPoint]:
    """Run ``config`` at every (p_request, p_stay_on) pair, p_request outermost.

    Points may run in a process pool; results come back in grid order.
    """
    jobs = [(config, pr, ps) for pr in grid for ps in grid]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def queued_round_fraction(point: SweepPoint) -> float:
    """Share of rounds (over all replicas) that ended with a nonempty queue."""
    rows = point.result.rounds
    return float(np.mean([m.customers_in_queue > 0 for m in rows]))
