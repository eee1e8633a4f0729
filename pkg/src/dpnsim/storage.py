"""Secondary sources: a shared battery and an optional solar panel feeding it.

Only special users may draw from them, and only while their request sits in
the queue.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .allocation import PendingRequest, _arrays, greedy_mask
from .core import ENERGY_TOL, AllocationPolicy, SolarConfig, StorageConfig


@dataclass
class StorageUnit:
    capacity: float
    charge: float = 0.0

    def __post_init__(self):
        if self.capacity < 0 or not (-ENERGY_TOL <= self.charge <= self.capacity + ENERGY_TOL):
            raise ValueError(f"invalid storage state: charge {self.charge} of capacity {self.capacity}")

    @classmethod
    def from_config(cls, config: StorageConfig, grid_cap: float) -> "StorageUnit":
        capacity = 0.1 * grid_cap if config.capacity is None else config.capacity
        initial = capacity if config.initial_charge is None else config.initial_charge
        return cls(capacity, initial)

    @property
    def headroom(self) -> float:
        return max(self.capacity - self.charge, 0.0)


def charge(storage: StorageUnit, surplus: float) -> tuple[StorageUnit, float]:
    """Absorb as much of ``surplus`` as fits."""
    if surplus < 0:
        raise ValueError("surplus must be non-negative")
    absorbed = min(surplus, storage.headroom)
    return StorageUnit(storage.capacity, min(storage.charge + absorbed, storage.capacity)), absorbed


def discharge_mask(
    amounts: np.ndarray,
    available: float,
    policy: AllocationPolicy,
    seniority: np.ndarray | None = None,
    user_ids: np.ndarray | None = None,
) -> np.ndarray:
    # The optimizer only runs on the grid allocation; storage stays greedy.
    if policy is AllocationPolicy.GENETIC:
        policy = AllocationPolicy.SMALLEST_FIRST
    return greedy_mask(amounts, available, policy, seniority, user_ids)


def discharge_to_queue(
    storage: StorageUnit,
    queued_special: Sequence[PendingRequest],
    policy: AllocationPolicy,
) -> tuple[StorageUnit, dict[int, float]]:
    """Serve queued special users from the stored charge.

    Returns the drained unit and the grants; users not granted stay queued.
    """
    if not queued_special or storage.charge <= 0:
        return StorageUnit(storage.capacity, storage.charge), {}
    amounts, seniority, ids = _arrays(queued_special)
    mask = discharge_mask(amounts, storage.charge, policy, seniority, ids)
    grants = {p.user_id: p.amount for p, m in zip(queued_special, mask) if m}
    left = max(storage.charge - float(amounts[mask].sum()), 0.0)
    return StorageUnit(storage.capacity, left), grants


def draw_solar(solar: SolarConfig, rng: np.random.Generator) -> float:
    """Bernoulli(p_sun) times uniform on (0, solar_cap]. Always consumes two draws."""
    sunny, level = rng.random(2)
    if sunny < solar.p_sun:
        return solar.solar_cap * (1.0 - level)
    return 0.0


def solar_step(
    solar: SolarConfig, battery: StorageUnit, rng: np.random.Generator
) -> tuple[float, StorageUnit, float]:
    """Produce, top up the battery, and hand the overflow to the grid.

    Returns ``(produced, battery, grid_bonus)``.
    """
    produced = draw_solar(solar, rng)
    battery, absorbed = charge(battery, produced)
    return produced, battery, produced - absorbed
