"""Command-line scenario runner.

    dpnsim presets
    dpnsim run --preset table2_nobattery --out out/ --seed 3
    dpnsim run --config my.yaml --out out/
    dpnsim run --preset table1 --inject-requests requests.json --out out/
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigError, RngStreams, config_to_dict, load_config, validate_config
from .metrics import REFERENCES, ROUND_COLUMNS, compare_to_reference, rounds_csv
from .presets import PRESETS, TABLE1_REQUESTS, Scenario, check_presets, get_preset, list_presets, run_sweep
from .routing import IEEE39_GENERATORS, export_snapshot, load_topology, random_scenario, route
from .simulation import run_experiment

log = logging.getLogger("dpnsim")

FORMATS = ("csv", "json", "dot")
# Comparison tolerance used in summary.json for golden-table presets.
DEFAULT_TOLERANCE = 0.10
_COMPARED = (
    "energy_distributed",
    "energy_requested",
    "customers_in_queue",
    "customers_received",
    "customers_requested",
    "total_delivered",
)

SWEEP_COLUMNS = (
    "energy_distributed",
    "energy_requested",
    "customers_in_queue",
    "customers_received",
    "customers_requested",
    "customers_entered_queue",
    "customers_satisfied_from_queue",
    "customers_dropped_from_queue",
    "rounds_in_queue",
    "rounds_to_satisfaction",
)


def read_injected(path: str | Path) -> list[list[float]]:
    """Per-round request vectors from JSON (a list, or a list of lists) or CSV
    (one row per round, one column per user)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        data = [[float(x) for x in r] for r in rows]
    else:
        data = json.loads(text)
        if data and not isinstance(data[0], list):
            data = [data]
    if not data:
        raise ValueError(f"{path}: no requests found")
    for r in data:
        if any(x < 0 for x in r):
            raise ValueError(f"{path}: negative request")
    return data


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _write(out: Path, name: str, text: str) -> Path:
    p = out / name
    p.write_text(text)
    log.info("wrote %s", p)
    return p


def _wants(formats: Sequence[str], fmt: str) -> bool:
    return not formats or fmt in formats


def _run_simulation(sc: Scenario, cfg, out: Path, formats, injected) -> dict:
    if injected is not None:
        for r in injected:
            if len(r) != cfg.n_users:
                raise ValueError(f"injected round has {len(r)} requests for {cfg.n_users} users")
    result = run_experiment(cfg, injected=injected)
    summary = result.summary()
    doc = {"scenario": sc.name, "config": config_to_dict(cfg), "summary": summary.to_dict()}
    if sc.name in REFERENCES:
        golden = REFERENCES[sc.name]
        tol = {k: DEFAULT_TOLERANCE for k in _COMPARED if k in golden}
        report = compare_to_reference(summary, sc.name, tol)
        doc["comparison"] = [dataclasses.asdict(r) for r in report.rows]
        print(report.format())
    if _wants(formats, "csv"):
        _write(out, "rounds.csv", rounds_csv(result.rounds))
        if cfg.n_rounds == 1 and cfg.n_simulations == 1:
            last = result.runs[0].world.last_round
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["user", "request", "grant", "queued", "storage"])
            for u in range(cfg.n_users):
                w.writerow([u + 1, repr(float(last.requests[u])), repr(float(last.grid[u])),
                            int(last.queued[u]), repr(float(last.storage[u]))])
            _write(out, "users.csv", buf.getvalue())
    if _wants(formats, "json"):
        _write(out, "summary.json", json.dumps(doc, indent=2))
    for key in ("energy_distributed", "customers_in_queue", "customers_received"):
        m = summary.metrics[key]
        print(f"{m.label}: {m.mean:.4f} (sd {m.std:.4f})")
    return doc


def _run_sweep(sc: Scenario, cfg, out: Path, formats, workers: int) -> dict:
    points = run_sweep(cfg, grid=sc.grid, workers=workers)
    if _wants(formats, "csv"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("p_request", "p_stay_on") + ROUND_COLUMNS)
        for pt in points:
            for m in pt.result.rounds:
                w.writerow([pt.p_request, pt.p_stay_on] + [_cell(getattr(m, c)) for c in ROUND_COLUMNS])
        _write(out, "rounds.csv", buf.getvalue())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("p_request", "p_stay_on") + SWEEP_COLUMNS + tuple(c + "_sd" for c in SWEEP_COLUMNS))
        for pt in points:
            w.writerow([pt.p_request, pt.p_stay_on]
                       + [_cell(pt.summary.mean(c)) for c in SWEEP_COLUMNS]
                       + [_cell(pt.summary.metrics[c].std) for c in SWEEP_COLUMNS])
        _write(out, "sweep.csv", buf.getvalue())
    doc = {
        "scenario": sc.name,
        "config": config_to_dict(cfg),
        "points": [
            {"p_request": pt.p_request, "p_stay_on": pt.p_stay_on,
             "summary": {c: pt.summary.mean(c) for c in SWEEP_COLUMNS},
             "sd": {c: pt.summary.metrics[c].std for c in SWEEP_COLUMNS}}
            for pt in points
        ],
    }
    if _wants(formats, "json"):
        _write(out, "summary.json", json.dumps(doc, indent=2))
    return doc


def _cell(v):
    return repr(round(float(v), 12)) if isinstance(v, (float, np.floating)) else str(v)


def _run_routing(sc: Scenario, cfg, out: Path, formats) -> dict:
    g = load_topology(sc.topology)
    rng = RngStreams(cfg.seed).routing
    pool = IEEE39_GENERATORS if sc.topology == "ieee39" else None
    g, demands = random_scenario(g, sc.n_sources, sc.n_consumers, rng, source_pool=pool)
    params = dataclasses.replace(sc.routing, global_capacity=cfg.energy_cap)
    plan = route(g, demands, params)
    if _wants(formats, "csv"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["consumer", "source", "path", "demand", "sent", "delivered"])
        for a in plan.assignments:
            w.writerow([a.consumer, a.source, "-".join(map(str, a.path)), repr(demands[a.consumer]),
                        repr(a.sent), repr(a.delivered)])
        for c in plan.queued:
            w.writerow([c, "", "", repr(demands[c]), "", ""])
        _write(out, "routes.csv", buf.getvalue())
    if _wants(formats, "json"):
        _write(out, "snapshot.json", export_snapshot(plan, g, "json"))
    if _wants(formats, "dot"):
        _write(out, "snapshot.dot", export_snapshot(plan, g, "dot"))
    doc = {
        "scenario": sc.name,
        "sources": plan.sources,
        "assigned": len(plan.assignments),
        "queued": plan.queued,
        "users_per_source": {str(k): v for k, v in plan.users_per_source().items()},
        "total_sent": plan.total_sent,
    }
    if _wants(formats, "json"):
        _write(out, "summary.json", json.dumps(doc, indent=2))
    print(f"{len(plan.assignments)} consumers routed, {len(plan.queued)} queued, total sent {plan.total_sent:.4f}")
    return doc


def run(args: argparse.Namespace) -> int:
    if args.preset:
        sc = get_preset(args.preset)
    elif args.config:
        sc = Scenario("custom", "from config file", load_config(args.config))
    else:
        raise ValueError("give --preset or --config")
    cfg = sc.config
    if args.preset and args.config:
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    validate_config(cfg)

    injected = None
    if args.inject_requests:
        injected = read_injected(args.inject_requests)
    elif sc.name == "table1":
        injected = [list(TABLE1_REQUESTS)]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = args.format or []
    if sc.topology:
        _run_routing(sc, cfg, out, formats)
    elif sc.sweep:
        _run_sweep(sc, cfg, out, formats, args.workers)
    else:
        _run_simulation(sc, cfg, out, formats, injected)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpnsim", description="Digital power network round simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a preset or a config file")
    r.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--config", help="JSON or YAML GridConfig file")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--out", default="out", help="output directory")
    r.add_argument("--inject-requests", help="explicit per-round requests (JSON or CSV)")
    r.add_argument("--format", action="append", choices=FORMATS,
                   help="restrict outputs to these formats (repeatable; default all)")
    r.add_argument("--workers", type=int, default=1, help="processes for probability sweeps")

    sub.add_parser("presets", help="list the preset catalog")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "presets":
            check_presets()
            for name, desc in list_presets().items():
                print(f"{name:18s} {desc}")
            return 0
        return run(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
