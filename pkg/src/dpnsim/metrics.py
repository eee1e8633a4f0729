"""Round counters, streaming statistics, cross-run aggregation and golden-table checks."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class Welford:
    """One-pass mean/variance accumulator (sample variance, ``n - 1``)."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self) -> None:
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def merge(self, other: "Welford") -> "Welford":
        """Combine two accumulators (Chan et al. pairwise update)."""
        out = Welford()
        n = self.n + other.n
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.n = n
        out.mean = self.mean + delta * other.n / n
        out.m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return out

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class RoundMetrics:
    """Counters for one round. Field order is the rounds.csv column order."""

    simulation: int = 0
    round: int = 0
    effective_cap: float = 0.0
    energy_distributed: float = 0.0
    energy_requested: float = 0.0
    surplus: float = 0.0
    users_on: int = 0
    customers_in_queue: int = 0
    customers_received: int = 0
    customers_requested: int = 0
    customers_entered_queue: int = 0
    customers_satisfied_from_queue: int = 0
    customers_dropped_from_queue: int = 0
    battery_distributed: float = 0.0
    battery_available: float = 0.0
    battery_requested: float = 0.0
    battery_absorbed: float = 0.0
    customers_requested_battery: int = 0
    customers_received_battery: int = 0
    solar_produced: float = 0.0
    grid_bonus: float = 0.0
    total_delivered: float = 0.0


ROUND_COLUMNS = tuple(f.name for f in dataclasses.fields(RoundMetrics))
# Columns that are labels rather than measurements.
_ID_COLUMNS = ("simulation", "round")
STAT_COLUMNS = tuple(c for c in ROUND_COLUMNS if c not in _ID_COLUMNS)

# Row labels of the published comparison tables, keyed by metric name.
LABELS = {
    "energy_distributed": "Energy distributed per round",
    "energy_requested": "Energy requested per round",
    "customers_in_queue": "Number of customers in the queue per round",
    "customers_received": "Number of customers that received energy per round",
    "customers_requested": "Number of customers that requested energy per round",
    "customers_entered_queue": "Number of customers that entered the queue per round",
    "customers_satisfied_from_queue": "Number of customers that were satisfied in the queue per round",
    "not_satisfied_at_end": "Number of customers not satisfied by the end of the rounds",
    "never_satisfied_in_queue": "Number of customers that were never satisfied in the queue",
    "battery_distributed": "Energy distributed by the battery per round",
    "battery_available": "Energy available in the battery per round",
    "battery_requested": "Energy requested from battery per round",
    "customers_requested_battery": "Number of customers that requested from the battery per round",
    "customers_received_battery": "Number of customers that received energy from the battery per round",
    "never_satisfied_by_battery": "Number of customer that were never satisfied by the battery",
    "solar_produced": "Solar energy produced per round",
    "total_delivered": "Total energy delivered (Battery+Grid) per round",
    "rounds_to_satisfaction": "Number of rounds a customer in the queue waits to be satisfied",
    "rounds_in_queue": "Number of rounds a customer spends in the queue",
    "battery_wait": "Wait time to receive energy from the battery",
}


@dataclass
class WaitStats:
    """Per-run queue bookkeeping, filled by the simulator."""

    rounds_in_queue: Welford = field(default_factory=Welford)
    rounds_to_satisfaction: Welford = field(default_factory=Welford)
    battery_wait: Welford = field(default_factory=Welford)
    not_satisfied_at_end: int = 0
    never_satisfied_in_queue: int = 0
    never_satisfied_by_battery: int = 0
    queue_rounds_total: int = 0
    users_ever_queued: int = 0

    @property
    def queue_rounds_per_queued_user(self) -> float:
        if self.users_ever_queued == 0:
            return 0.0
        return self.queue_rounds_total / self.users_ever_queued


class RunAccumulator:
    """Streaming statistics for every RoundMetrics column of one run."""

    def __init__(self, config_key: str = "") -> None:
        self.config_key = config_key
        self.stats = {name: Welford() for name in STAT_COLUMNS}
        self.waits = WaitStats()
        self.n_rounds = 0

    def mean(self, name: str) -> float:
        return self.stats[name].mean

    def std(self, name: str) -> float:
        return self.stats[name].std


def record_round(m: RoundMetrics, acc: RunAccumulator) -> RunAccumulator:
    for name, w in acc.stats.items():
        w.push(float(getattr(m, name)))
    acc.n_rounds += 1
    return acc


_RUN_LEVEL = (
    "not_satisfied_at_end",
    "never_satisfied_in_queue",
    "never_satisfied_by_battery",
    "rounds_in_queue",
    "rounds_to_satisfaction",
    "battery_wait",
    "queue_rounds_per_queued_user",
)


@dataclass
class MetricSummary:
    mean: float
    std: float
    between_run_std: float
    label: str | None = None


@dataclass
class SummaryTable:
    n_runs: int
    n_rounds: int
    metrics: dict[str, MetricSummary]

    def mean(self, name: str) -> float:
        return self.metrics[name].mean

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "n_rounds": self.n_rounds,
            "metrics": {k: dataclasses.asdict(v) for k, v in self.metrics.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def aggregate(runs: Sequence[RunAccumulator]) -> SummaryTable:
    """Pool per-round statistics over all runs (merged in run order).

    Wait-time samples are pooled across runs; end-of-run counts are averaged
    over runs. ``between_run_std`` is the spread of the per-run means.
    """
    if not runs:
        raise ValueError("no runs to aggregate")
    keys = {r.config_key for r in runs}
    if len(keys) > 1:
        raise ValueError("config mismatch: runs come from different configurations")

    metrics: dict[str, MetricSummary] = {}
    for name in STAT_COLUMNS:
        pooled = Welford()
        per_run = Welford()
        for r in runs:
            pooled = pooled.merge(r.stats[name])
            per_run.push(r.stats[name].mean)
        metrics[name] = MetricSummary(pooled.mean, pooled.std, per_run.std, LABELS.get(name))
    for name in _RUN_LEVEL:
        per_run = Welford()
        pooled = None
        for r in runs:
            value = getattr(r.waits, name)
            if isinstance(value, Welford):
                # wait samples are pooled; runs without samples carry no information
                pooled = (pooled or Welford()).merge(value)
                if value.n:
                    per_run.push(value.mean)
            else:
                per_run.push(float(value))
        if pooled is not None:
            metrics[name] = MetricSummary(pooled.mean, pooled.std, per_run.std, LABELS.get(name))
        else:
            metrics[name] = MetricSummary(per_run.mean, per_run.std, per_run.std, LABELS.get(name))
    return SummaryTable(len(runs), runs[0].n_rounds, metrics)


# --- golden tables ---------------------------------------------------------------

REFERENCES: dict[str, dict[str, float]] = {
    "table2_battery": {
        "energy_distributed": 99.5224,
        "energy_requested": 189.0862,
        "customers_in_queue": 91.5224,
        "customers_received": 203.1692,
        "customers_requested": 294.6916,
        "customers_entered_queue": 6.7464,
        "customers_satisfied_from_queue": 4.6908,
        "not_satisfied_at_end": 102.78,
        "never_satisfied_in_queue": 79.36,
        "battery_distributed": 0.4662,
        "battery_available": 9.4556,
        "battery_requested": 9.4556,
        "customers_requested_battery": 9.2533,
        "customers_received_battery": 0.4752,
        "never_satisfied_by_battery": 25.82,
        "total_delivered": 99.9886,
        "rounds_to_satisfaction": 10.5674,
        "rounds_in_queue": 9.1522,
        "battery_wait": 9.4713,
    },
    "table2_nobattery": {
        "energy_distributed": 99.5326,
        "energy_requested": 190.4968,
        "customers_in_queue": 92.9716,
        "customers_received": 202.5528,
        "customers_requested": 295.5244,
        "customers_entered_queue": 6.8888,
        "customers_satisfied_from_queue": 4.8032,
        "not_satisfied_at_end": 104.28,
        "never_satisfied_in_queue": 79.2,
        "total_delivered": 99.5326,
        "rounds_to_satisfaction": 10.7096,
        "rounds_in_queue": 9.2972,
    },
    # Solar rows reuse the battery fields: the panel and its battery form one
    # secondary source.
    "table3_unopt": {
        "energy_distributed": 99.53,
        "energy_requested": 189.80,
        "customers_in_queue": 92.29,
        "customers_received": 203.10,
        "customers_requested": 295.4,
        "customers_satisfied_from_queue": 4.83,
        "battery_distributed": 2.417,
        "battery_available": 0.897,
        "solar_produced": 2.443,
        "customers_requested_battery": 9.312,
        "customers_received_battery": 2.476,
        "total_delivered": 101.9,
        "rounds_to_satisfaction": 10.56,
        "rounds_in_queue": 9.229,
        "battery_wait": 0.2033,
    },
    "table3_opt": {
        "energy_distributed": 99.978,
        "energy_requested": 148.23,
        "customers_in_queue": 96.73,
        "customers_received": 200.356,
        "customers_requested": 297.11,
        "customers_satisfied_from_queue": 47.73,
        "battery_distributed": 2.5571,
        "battery_available": 0.0020,
        "solar_produced": 2.5571,
        "customers_requested_battery": 49.9740,
        "customers_received_battery": 6.49,
        "total_delivered": 102.55,
        "rounds_to_satisfaction": 2.0856,
        "rounds_in_queue": 9.67,
        "battery_wait": 6.3794,
    },
}


@dataclass
class ComparisonRow:
    metric: str
    label: str
    reference: float
    measured: float
    deviation: float
    tolerance: float
    passed: bool


@dataclass
class ComparisonReport:
    reference: str
    rows: list[ComparisonRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def format(self) -> str:
        lines = [f"reference {self.reference}"]
        for r in self.rows:
            verdict = "PASS" if r.passed else "FAIL"
            lines.append(
                f"  {verdict} {r.label}: measured {r.measured:.4f} vs {r.reference:.4f}"
                f" (dev {100 * r.deviation:.2f}%, tol {100 * r.tolerance:.1f}%)"
            )
        return "\n".join(lines)


def compare_to_reference(
    summary: SummaryTable | Mapping[str, float],
    reference: str,
    tolerances: Mapping[str, float],
) -> ComparisonReport:
    """Relative deviation of each toleranced metric from a golden table.

    ``summary`` may be a SummaryTable or a plain metric -> mean mapping.
    """
    if reference not in REFERENCES:
        raise KeyError(f"unknown reference table {reference!r}")
    golden = REFERENCES[reference]
    rows = []
    for name, tol in tolerances.items():
        if name not in golden:
            raise KeyError(f"metric {name!r} not in reference {reference!r}")
        measured = summary.mean(name) if isinstance(summary, SummaryTable) else float(summary[name])
        ref = golden[name]
        dev = abs(measured - ref) / abs(ref) if ref else abs(measured)
        rows.append(ComparisonRow(name, LABELS.get(name, name), ref, measured, dev, tol, dev <= tol))
    return ComparisonReport(reference, rows)


# --- writers -----------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(round(value, 12))
    return str(value)


def rounds_csv(rows: Iterable[RoundMetrics]) -> str:
    """rounds.csv contents: header ``ROUND_COLUMNS`` then one row per round."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROUND_COLUMNS)
    for m in rows:
        writer.writerow([_fmt(getattr(m, c)) for c in ROUND_COLUMNS])
    return buf.getvalue()


def read_rounds_csv(text: str) -> list[RoundMetrics]:
    types = {f.name: f.type for f in dataclasses.fields(RoundMetrics)}
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append(RoundMetrics(**{
            k: (int(v) if types[k] in ("int", int) else float(v)) for k, v in rec.items()
        }))
    return out
