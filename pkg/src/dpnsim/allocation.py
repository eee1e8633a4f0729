"""Capacity-capped, all-or-nothing grant decisions and queue maintenance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ENERGY_TOL, AllocationPolicy

# Sort key for requests that have never been queued: junior to every queued one.
NOT_QUEUED = np.iinfo(np.int64).max


@dataclass(frozen=True)
class PendingRequest:
    user_id: int
    amount: float
    queued_since: int | None = None

    def __post_init__(self):
        if not self.amount > 0:
            raise ValueError(f"pending request for user {self.user_id} has non-positive amount")


@dataclass
class AllocationResult:
    grants: dict[int, float]
    newly_queued: list[PendingRequest]
    surplus: float

    @property
    def granted_total(self) -> float:
        return float(sum(self.grants.values()))


@dataclass
class Queue:
    """Pending requests in seniority order (oldest first)."""

    entries: list[PendingRequest] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def user_ids(self) -> list[int]:
        return [e.user_id for e in self.entries]


def priority_order(
    amounts: np.ndarray,
    policy: AllocationPolicy,
    seniority: np.ndarray | None = None,
    user_ids: np.ndarray | None = None,
) -> np.ndarray:
    """Indices in the order the greedy policy examines them.

    Ties on amount go to the older queue entry, then to the lower user id.
    """
    n = len(amounts)
    if seniority is None:
        seniority = np.full(n, NOT_QUEUED, dtype=np.int64)
    if user_ids is None:
        user_ids = np.arange(n)
    if policy is AllocationPolicy.LARGEST_FIRST:
        return np.lexsort((user_ids, seniority, -amounts))
    return np.lexsort((user_ids, seniority, amounts))


def greedy_mask(
    amounts: np.ndarray,
    cap: float,
    policy: AllocationPolicy,
    seniority: np.ndarray | None = None,
    user_ids: np.ndarray | None = None,
) -> np.ndarray:
    """Boolean grant mask of the greedy policy.

    Requests are visited in priority order and granted whole whenever they
    still fit under ``cap``; a request that does not fit is skipped and the
    scan continues.
    """
    amounts = np.asarray(amounts, dtype=float)
    n = len(amounts)
    mask = np.zeros(n, dtype=bool)
    if n == 0:
        return mask
    if amounts.sum() <= cap + ENERGY_TOL:
        mask[:] = True
        return mask
    order = priority_order(amounts, policy, seniority, user_ids)
    if policy is AllocationPolicy.LARGEST_FIRST:
        used = 0.0
        limit = cap + ENERGY_TOL
        for i in order:
            a = amounts[i]
            if used + a <= limit:
                used += a
                mask[i] = True
        return mask
    # Ascending scan: once one request misfits, every later (no smaller) one does too.
    running = np.cumsum(amounts[order])
    k = int(np.searchsorted(running, cap + ENERGY_TOL, side="right"))
    mask[order[:k]] = True
    return mask


def _arrays(pending: Sequence[PendingRequest]):
    amounts = np.array([p.amount for p in pending], dtype=float)
    seniority = np.array(
        [NOT_QUEUED if p.queued_since is None else p.queued_since for p in pending], dtype=np.int64
    )
    ids = np.array([p.user_id for p in pending], dtype=np.int64)
    return amounts, seniority, ids


def seniority_sorted(requests: Sequence[PendingRequest]) -> list[PendingRequest]:
    return sorted(
        requests,
        key=lambda p: (NOT_QUEUED if p.queued_since is None else p.queued_since, p.user_id),
    )


def result_from_mask(
    pending: Sequence[PendingRequest], mask: np.ndarray, cap: float
) -> AllocationResult:
    grants = {p.user_id: p.amount for p, m in zip(pending, mask) if m}
    rest = seniority_sorted([p for p, m in zip(pending, mask) if not m])
    total = float(sum(grants.values()))
    return AllocationResult(grants, rest, cap - total)


def allocate(
    pending: Sequence[PendingRequest], cap: float, policy: AllocationPolicy
) -> AllocationResult:
    """Grant whole requests greedily under ``cap``; the rest are queued.

    ``policy`` must be one of the two greedy policies; the genetic optimizer
    lives in :mod:`dpnsim.optimizer`.
    """
    if policy is AllocationPolicy.GENETIC:
        raise ValueError("allocate handles greedy policies; use optimizer.ga_allocate")
    if not pending:
        return AllocationResult({}, [], cap)
    amounts, seniority, ids = _arrays(pending)
    mask = greedy_mask(amounts, cap, policy, seniority, ids)
    return result_from_mask(pending, mask, cap)


def queue_attrition(
    queue: Queue, p_stay_queue: float, rng: np.random.Generator
) -> tuple[Queue, int]:
    """Each entry independently survives with probability ``p_stay_queue``."""
    if not queue.entries:
        return Queue([]), 0
    keep = rng.random(len(queue.entries)) < p_stay_queue
    survivors = [e for e, k in zip(queue.entries, keep) if k]
    return Queue(survivors), len(queue.entries) - len(survivors)


def merge_pending(
    new_requests: Sequence[PendingRequest], queue: Queue
) -> list[PendingRequest]:
    """Queue entries (oldest first) followed by the new requests."""
    merged = list(queue.entries) + list(new_requests)
    ids = [p.user_id for p in merged]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate user id(s) in pending requests: {dup}")
    return merged
