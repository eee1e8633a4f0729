"""Per-round ON/OFF request generation and its two-state Markov baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DemandParams


@dataclass
class UserState:
    id: int
    on: bool = False
    request: float = 0.0
    special: bool = False
    queued_since: int | None = None


@dataclass
class DemandStepOutcome:
    requests: np.ndarray
    turned_on: int
    turned_off: int

    @property
    def on_fraction(self) -> float:
        return float(np.count_nonzero(self.requests > 0)) / max(len(self.requests), 1)


def draw_requests(
    requests: np.ndarray,
    frozen: np.ndarray | None,
    params: DemandParams,
    rng: np.random.Generator,
) -> DemandStepOutcome:
    """Advance every non-frozen user by one round.

    Three uniform vectors are drawn for *all* users every round (frozen users
    included) so that the stream position never depends on queue contents:
    ``p_req`` decides OFF->ON, ``p_on`` decides ON->OFF, and the third supplies
    the fresh request amount on (0, max_request].
    """
    n = len(requests)
    p_req = rng.random(n)
    p_on = rng.random(n)
    amounts = params.max_request_per_user * (1.0 - rng.random(n))

    on = requests > 0
    movable = np.ones(n, dtype=bool) if frozen is None else ~frozen
    turn_on = movable & ~on & (p_req < params.p_request)
    turn_off = movable & on & (p_on > params.p_stay_on)

    out = requests.copy()
    out[turn_on] = amounts[turn_on]
    out[turn_off] = 0.0
    return DemandStepOutcome(out, int(turn_on.sum()), int(turn_off.sum()))


def step_demand(
    states: Sequence[UserState], params: DemandParams, rng: np.random.Generator
) -> DemandStepOutcome:
    """Object-level wrapper over :func:`draw_requests`.

    Queued users (``queued_since`` set) keep their request untouched. The
    passed states are updated in place.
    """
    requests = np.array([s.request if s.on else 0.0 for s in states], dtype=float)
    frozen = np.array([s.queued_since is not None for s in states], dtype=bool)
    outcome = draw_requests(requests, frozen, params, rng)
    for s, r in zip(states, outcome.requests):
        s.request = float(r)
        s.on = r > 0
    return outcome


def stationary_on_probability(params: DemandParams) -> float:
    """Long-run ON probability of the two-state chain (OFF->ON at ``p_request``,
    ON->OFF at ``1 - p_stay_on``)."""
    up = params.p_request
    down = 1.0 - params.p_stay_on
    if up + down <= 0:
        raise ValueError("no unique stationary distribution: both transition rates are 0")
    return up / (up + down)


def empirical_on_fraction(trajectory: Sequence[DemandStepOutcome], burn_in: int = 0) -> float:
    """Mean fraction of ON users over the rounds after ``burn_in``."""
    window = trajectory[burn_in:]
    if len(window) == 0:
        raise ValueError("empty post-burn-in window")
    return float(np.mean([o.on_fraction for o in window]))
