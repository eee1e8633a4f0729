"""Shared primitives: configuration records, validation and seeded random streams.

Energy is measured in *units*, where one unit is the largest amount a single
user may request in one round.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

# Absolute tolerance for every comparison of summed energy against a cap.
ENERGY_TOL = 1e-9

EnergyAmount = float


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``errors`` holds every violation, each prefixed with its field path.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


INITIAL_STATES = ("stationary", "off")


class AllocationPolicy(str, enum.Enum):
    SMALLEST_FIRST = "smallest_first"
    LARGEST_FIRST = "largest_first"
    GENETIC = "genetic"


@dataclass(frozen=True)
class DemandParams:
    p_request: float = 0.5
    p_stay_on: float = 0.5
    max_request_per_user: EnergyAmount = 1.0


@dataclass(frozen=True)
class StorageConfig:
    """Shared battery. ``capacity=None`` means 10% of the grid cap;
    ``initial_charge=None`` means the battery starts full."""

    capacity: EnergyAmount | None = None
    initial_charge: EnergyAmount | None = None


@dataclass(frozen=True)
class SolarConfig:
    solar_cap: EnergyAmount = 10.0
    p_sun: float = 0.5


@dataclass(frozen=True)
class GaParams:
    population_size: int = 100
    generations: int = 70
    mutation_rate: float = 0.01
    crossover_rate: float = 0.8
    elitism: int = 2
    tournament_size: int = 3
    # (energy share, count share, queue-age share)
    fitness_weights: tuple[float, float, float] = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class GridConfig:
    n_users: int = 500
    energy_cap: EnergyAmount = 150.0
    demand: DemandParams = field(default_factory=DemandParams)
    p_stay_queue: float = 1.0
    p_change_queue_status: float = 0.0
    policy: AllocationPolicy = AllocationPolicy.SMALLEST_FIRST
    n_special_users: int = 0
    battery: StorageConfig | None = None
    solar: SolarConfig | None = None
    ga: GaParams | None = None
    n_rounds: int = 50
    n_simulations: int = 1
    seed: int = 0
    # "stationary": round 0 starts from the ON/OFF chain's long-run mix;
    # "off": every user starts OFF.
    initial_state: str = "stationary"

    @property
    def battery_capacity(self) -> float:
        if self.battery is None:
            return 0.0
        if self.battery.capacity is None:
            return 0.1 * self.energy_cap
        return self.battery.capacity

    @property
    def battery_initial_charge(self) -> float:
        if self.battery is None:
            return 0.0
        if self.battery.initial_charge is None:
            return self.battery_capacity
        return self.battery.initial_charge

    @property
    def ga_params(self) -> GaParams:
        return self.ga if self.ga is not None else GaParams()

    def replace(self, **changes: Any) -> "GridConfig":
        return dataclasses.replace(self, **changes)

    def with_demand(self, **changes: Any) -> "GridConfig":
        return dataclasses.replace(self, demand=dataclasses.replace(self.demand, **changes))


def _check_prob(errors: list[str], path: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
        errors.append(f"{path}: probability out of range [0, 1]: {value!r}")


def _check_count(errors: list[str], path: str, value: Any, minimum: int = 0) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        errors.append(f"{path}: expected integer >= {minimum}: {value!r}")


def _check_nonneg(errors: list[str], path: str, value: Any) -> None:
    # +inf is allowed: an uncapped grid
    if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value) or value < 0:
        errors.append(f"{path}: negative or non-numeric amount: {value!r}")


def validate_config(config: GridConfig) -> GridConfig:
    """Return ``config`` unchanged if valid, otherwise raise ConfigError listing
    every violation found."""
    errors: list[str] = []
    _check_count(errors, "n_users", config.n_users, 1)
    _check_nonneg(errors, "energy_cap", config.energy_cap)
    _check_prob(errors, "demand.p_request", config.demand.p_request)
    _check_prob(errors, "demand.p_stay_on", config.demand.p_stay_on)
    if not (isinstance(config.demand.max_request_per_user, (int, float))
            and config.demand.max_request_per_user > 0):
        errors.append(f"demand.max_request_per_user: must be > 0: {config.demand.max_request_per_user!r}")
    _check_prob(errors, "p_stay_queue", config.p_stay_queue)
    _check_prob(errors, "p_change_queue_status", config.p_change_queue_status)
    if not isinstance(config.policy, AllocationPolicy):
        errors.append(f"policy: unknown allocation policy {config.policy!r}")
    _check_count(errors, "n_special_users", config.n_special_users)
    if isinstance(config.n_special_users, int) and isinstance(config.n_users, int) \
            and config.n_special_users > config.n_users:
        errors.append(f"n_special_users: {config.n_special_users} exceeds n_users {config.n_users}")
    _check_count(errors, "n_rounds", config.n_rounds, 1)
    _check_count(errors, "n_simulations", config.n_simulations, 1)
    _check_count(errors, "seed", config.seed)
    if config.initial_state not in INITIAL_STATES:
        errors.append(f"initial_state: expected one of {INITIAL_STATES}: {config.initial_state!r}")
    if config.battery is not None:
        b = config.battery
        if b.capacity is not None:
            _check_nonneg(errors, "battery.capacity", b.capacity)
        if b.initial_charge is not None:
            _check_nonneg(errors, "battery.initial_charge", b.initial_charge)
            cap = b.capacity if b.capacity is not None else 0.1 * config.energy_cap
            if isinstance(cap, (int, float)) and isinstance(b.initial_charge, (int, float)) \
                    and b.initial_charge > cap:
                errors.append(f"battery.initial_charge: {b.initial_charge} exceeds capacity {cap}")
    if config.solar is not None:
        _check_nonneg(errors, "solar.solar_cap", config.solar.solar_cap)
        _check_prob(errors, "solar.p_sun", config.solar.p_sun)
    if config.ga is not None:
        g = config.ga
        _check_count(errors, "ga.population_size", g.population_size, 1)
        _check_count(errors, "ga.generations", g.generations)
        _check_count(errors, "ga.elitism", g.elitism)
        _check_count(errors, "ga.tournament_size", g.tournament_size, 1)
        _check_prob(errors, "ga.mutation_rate", g.mutation_rate)
        _check_prob(errors, "ga.crossover_rate", g.crossover_rate)
        if isinstance(g.elitism, int) and isinstance(g.population_size, int) \
                and g.elitism >= g.population_size:
            errors.append("ga.elitism: must be smaller than ga.population_size")
        if len(g.fitness_weights) != 3:
            errors.append("ga.fitness_weights: expected three weights")
    if errors:
        raise ConfigError(errors)
    return config


# --- declarative config files -------------------------------------------------

_SUBRECORDS = {
    "demand": DemandParams,
    "battery": StorageConfig,
    "solar": SolarConfig,
    "ga": GaParams,
}


def _build(cls, data: Mapping[str, Any], path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError([f"{path}{k}: unknown field" for k in unknown])
    return cls(**data)


def config_from_dict(data: Mapping[str, Any]) -> GridConfig:
    """Build a GridConfig from plain data (keys are the dataclass field names)."""
    data = dict(data)
    for key, cls in _SUBRECORDS.items():
        if data.get(key) is not None:
            sub = dict(data[key])
            if key == "ga" and "fitness_weights" in sub:
                sub["fitness_weights"] = tuple(sub["fitness_weights"])
            data[key] = _build(cls, sub, f"{key}.")
    if "policy" in data:
        try:
            data["policy"] = AllocationPolicy(data["policy"])
        except ValueError:
            raise ConfigError([f"policy: unknown allocation policy {data['policy']!r}"]) from None
    return _build(GridConfig, data, "")


def config_to_dict(config: GridConfig) -> dict[str, Any]:
    out = dataclasses.asdict(config)
    out["policy"] = config.policy.value
    if out.get("ga") is not None:
        out["ga"]["fitness_weights"] = list(out["ga"]["fitness_weights"])
    return out


def load_config(path: str | Path) -> GridConfig:
    """Read a JSON or YAML config file and validate it."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return validate_config(config_from_dict(data))


# --- random streams -------------------------------------------------------------

STREAMS = ("demand", "queue", "solar", "ga", "routing")


class RngStreams:
    """Independent PCG64 generators, one per concern, derived from a master seed.

    Replica ``r`` of a multi-run experiment uses ``RngStreams(seed, replica=r)``;
    the demand draws of a replica never depend on how many numbers any other
    concern consumed.
    """

    def __init__(self, seed: int, replica: int = 0):
        self.seed = int(seed)
        self.replica = int(replica)
        for index, name in enumerate(STREAMS):
            seq = np.random.SeedSequence(self.seed, spawn_key=(self.replica, index))
            setattr(self, name, np.random.Generator(np.random.PCG64(seq)))

    demand: np.random.Generator
    queue: np.random.Generator
    solar: np.random.Generator
    ga: np.random.Generator
    routing: np.random.Generator
