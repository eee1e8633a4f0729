"""Energy path planning on a node-role graph.

Topology documents are plain mappings::

    {"nodes": [{"id": 1, "role": "source"}, {"id": 2}],
     "edges": [{"a": 1, "b": 2, "weight": 1.0, "probability": 0.9}]}

``role`` is optional (default ``idle``); ``weight`` defaults to 1 (hop count)
and ``probability`` is display-only metadata.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .core import ENERGY_TOL


class TopologyError(ValueError):
    pass


class Role(str, enum.Enum):
    SOURCE = "source"
    CONSUMER = "consumer"
    IDLE = "idle"
    PASS_THROUGH = "pass_through"
    QUEUED = "queued"


# Snapshot colour key.
ROLE_COLORS = {
    Role.SOURCE: "green",
    Role.CONSUMER: "orange",
    Role.IDLE: "lightyellow",
    Role.QUEUED: "red",
    Role.PASS_THROUGH: "blue",
}
PATH_COLOR = "lightblue"

# When a node carries several roles, the snapshot colours it by the first match.
_ROLE_PRECEDENCE = (Role.SOURCE, Role.QUEUED, Role.CONSUMER, Role.PASS_THROUGH, Role.IDLE)


@dataclass
class EnergyGraph:
    nodes: list[int]
    roles: dict[int, Role]
    adj: dict[int, dict[int, float]]
    edge_probability: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return sorted((a, b, w) for a, nbrs in self.adj.items() for b, w in nbrs.items() if a < b)

    @property
    def sources(self) -> list[int]:
        return sorted(n for n, r in self.roles.items() if r is Role.SOURCE)

    def with_roles(self, roles: Mapping[int, Role]) -> "EnergyGraph":
        new = dict(self.roles)
        new.update({k: Role(v) for k, v in roles.items()})
        return EnergyGraph(list(self.nodes), new, self.adj, dict(self.edge_probability))

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for v in self.adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.nodes)

    def to_document(self) -> dict:
        edges = []
        for a, b, w in self.edges:
            e = {"a": a, "b": b, "weight": w}
            if (a, b) in self.edge_probability:
                e["probability"] = self.edge_probability[(a, b)]
            edges.append(e)
        return {
            "nodes": [{"id": n, "role": self.roles[n].value} for n in self.nodes],
            "edges": edges,
        }


# IEEE 39-bus New England system: 34 lines plus 12 transformer branches.
IEEE39_BRANCHES = (
    (1, 2), (1, 39), (2, 3), (2, 25), (2, 30), (3, 4), (3, 18), (4, 5), (4, 14),
    (5, 6), (5, 8), (6, 7), (6, 11), (6, 31), (7, 8), (8, 9), (9, 39), (10, 11),
    (10, 13), (10, 32), (11, 12), (12, 13), (13, 14), (14, 15), (15, 16), (16, 17),
    (16, 19), (16, 21), (16, 24), (17, 18), (17, 27), (19, 20), (19, 33), (20, 34),
    (21, 22), (22, 23), (22, 35), (23, 24), (23, 36), (25, 26), (25, 37), (26, 27),
    (26, 28), (26, 29), (28, 29), (29, 38),
)
IEEE39_GENERATORS = tuple(range(30, 40))


def ieee39_document() -> dict:
    return {
        "nodes": [{"id": i} for i in range(1, 40)],
        "edges": [{"a": a, "b": b} for a, b in IEEE39_BRANCHES],
    }


def load_topology(spec: Mapping[str, Any] | str | Path) -> EnergyGraph:
    """Build a validated graph from a document, a JSON file path, or ``"ieee39"``."""
    if isinstance(spec, (str, Path)):
        if str(spec) == "ieee39":
            spec = ieee39_document()
        else:
            spec = json.loads(Path(spec).read_text())
    nodes: list[int] = []
    roles: dict[int, Role] = {}
    for rec in spec.get("nodes", []):
        nid = rec["id"]
        if nid in roles:
            raise TopologyError(f"duplicate node id {nid}")
        try:
            roles[nid] = Role(rec.get("role") or "idle")
        except ValueError:
            raise TopologyError(f"node {nid}: unknown role {rec.get('role')!r}") from None
        nodes.append(nid)
    adj: dict[int, dict[int, float]] = {n: {} for n in nodes}
    probs: dict[tuple[int, int], float] = {}
    for rec in spec.get("edges", []):
        a, b = rec["a"], rec["b"]
        for end in (a, b):
            if end not in roles:
                raise TopologyError(f"edge {a}-{b} references unknown node {end}")
        if a == b:
            raise TopologyError(f"self-loop at node {a}")
        w = float(rec.get("weight", 1.0))
        if not w >= 0:
            raise TopologyError(f"edge {a}-{b}: negative weight {w}")
        if b in adj[a]:
            raise TopologyError(f"duplicate edge {a}-{b}")
        adj[a][b] = w
        adj[b][a] = w
        if rec.get("probability") is not None:
            probs[(min(a, b), max(a, b))] = float(rec["probability"])
    return EnergyGraph(nodes, roles, adj, probs)


# --- shortest paths ------------------------------------------------------------------


@dataclass(frozen=True)
class ShortestPath:
    nodes: tuple[int, ...]
    cost: float

    @property
    def reachable(self) -> bool:
        return bool(self.nodes)


UNREACHABLE = ShortestPath((), math.inf)


def shortest_paths_from(g: EnergyGraph, src: int) -> dict[int, ShortestPath]:
    """Dijkstra from ``src`` to every reachable node.

    Heap entries are ``(cost, path)`` so that among equal-cost paths the
    lexicographically smallest node sequence wins.
    """
    if src not in g.adj:
        raise KeyError(f"node {src} not in graph")
    done: dict[int, ShortestPath] = {}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    while heap:
        cost, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done[u] = ShortestPath(path, cost)
        for v, w in g.adj[u].items():
            if v not in done:
                heapq.heappush(heap, (cost + w, path + (v,)))
    return done


def shortest_path(g: EnergyGraph, src: int, dst: int) -> ShortestPath:
    if dst not in g.adj:
        raise KeyError(f"node {dst} not in graph")
    return shortest_paths_from(g, src).get(dst, UNREACHABLE)


# --- routing ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoutingParams:
    path_loss: float = 0.06
    max_users_per_source: int = 5
    global_capacity: float = math.inf
    loss_mode: str = "path"  # or "hop": loss compounds per edge
    order: str = "descending"  # consumer processing: descending | ascending | arrival

    def __post_init__(self):
        if not 0 <= self.path_loss < 1:
            raise ValueError("path_loss must lie in [0, 1)")
        if self.loss_mode not in ("path", "hop"):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.order not in ("descending", "ascending", "arrival"):
            raise ValueError(f"unknown consumer order {self.order!r}")


@dataclass(frozen=True)
class Assignment:
    consumer: int
    source: int
    path: tuple[int, ...]
    sent: float
    delivered: float


@dataclass
class RoutingPlan:
    assignments: list[Assignment] = field(default_factory=list)
    queued: list[int] = field(default_factory=list)
    sources: list[int] = field(default_factory=list)
    # consumer -> requested amount, including queued consumers
    demands: dict[int, float] = field(default_factory=dict)

    @property
    def total_sent(self) -> float:
        return float(sum(a.sent for a in self.assignments))

    def users_per_source(self) -> dict[int, int]:
        counts = {s: 0 for s in self.sources}
        for a in self.assignments:
            counts[a.source] = counts.get(a.source, 0) + 1
        return counts

    def node_roles(self) -> dict[int, set[Role]]:
        roles: dict[int, set[Role]] = {}
        for s in self.sources:
            roles.setdefault(s, set()).add(Role.SOURCE)
        for a in self.assignments:
            roles.setdefault(a.consumer, set()).add(Role.CONSUMER)
            for mid in a.path[1:-1]:
                roles.setdefault(mid, set()).add(Role.PASS_THROUGH)
        for c in self.queued:
            roles.setdefault(c, set()).add(Role.QUEUED)
        return roles

    def to_dict(self) -> dict:
        return {
            "assignments": [dict(asdict(a), path=list(a.path)) for a in self.assignments],
            "queued": list(self.queued),
            "sources": list(self.sources),
            "demands": [[k, v] for k, v in self.demands.items()],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RoutingPlan":
        return cls(
            assignments=[Assignment(a["consumer"], a["source"], tuple(a["path"]), a["sent"], a["delivered"])
                         for a in d["assignments"]],
            queued=list(d["queued"]),
            sources=list(d["sources"]),
            demands={k: v for k, v in d.get("demands", [])},
        )


def route(g: EnergyGraph, demands: Mapping[int, float], params: RoutingParams = RoutingParams()) -> RoutingPlan:
    """Assign each consumer to the nearest source that still has a free slot.

    Sources are the graph's ``source`` nodes. A source never serves itself.
    Consumers that find no free reachable source, or whose sent energy would
    push the total past ``global_capacity``, are queued.
    """
    sources = g.sources
    if not sources:
        raise ValueError("graph has no source nodes")
    for c, d in demands.items():
        if c not in g.adj:
            raise KeyError(f"consumer {c} not in graph")
        if not d > 0:
            raise ValueError(f"consumer {c}: demand must be positive")

    trees = {s: shortest_paths_from(g, s) for s in sources}
    if params.order == "arrival":
        order = list(demands)
    elif params.order == "ascending":
        order = sorted(demands, key=lambda c: (demands[c], c))
    else:
        order = sorted(demands, key=lambda c: (-demands[c], c))

    slots = {s: params.max_users_per_source for s in sources}
    plan = RoutingPlan(sources=list(sources), demands=dict(demands))
    total = 0.0
    keep = 1.0 - params.path_loss
    for c in order:
        options = sorted(
            (trees[s][c].cost, s) for s in sources
            if s != c and slots[s] > 0 and c in trees[s]
        )
        if not options:
            plan.queued.append(c)
            continue
        _, s = options[0]
        path = trees[s][c].nodes
        factor = keep if params.loss_mode == "path" else keep ** (len(path) - 1)
        sent = demands[c] / factor
        if total + sent > params.global_capacity + ENERGY_TOL:
            plan.queued.append(c)
            continue
        total += sent
        slots[s] -= 1
        plan.assignments.append(Assignment(c, s, path, sent, sent * factor))
    return plan


def random_scenario(
    g: EnergyGraph,
    n_sources: int,
    n_consumers: int,
    rng: np.random.Generator,
    source_pool: Iterable[int] | None = None,
) -> tuple[EnergyGraph, dict[int, float]]:
    """Pick sources (from ``source_pool`` if given) and consumers with
    uniform (0, 1] demands."""
    pool = sorted(source_pool) if source_pool is not None else list(g.nodes)
    srcs = sorted(int(x) for x in rng.choice(pool, size=n_sources, replace=False))
    others = [n for n in g.nodes if n not in srcs]
    cons = sorted(int(x) for x in rng.choice(others, size=n_consumers, replace=False))
    amounts = 1.0 - rng.random(n_consumers)
    roles = {n: Role.IDLE for n in g.nodes}
    roles.update({s: Role.SOURCE for s in srcs})
    return g.with_roles(roles), {c: float(a) for c, a in zip(cons, amounts)}


# --- snapshots ---------------------------------------------------------------------------


def primary_role(roles: set[Role]) -> Role:
    for r in _ROLE_PRECEDENCE:
        if r in roles:
            return r
    return Role.IDLE


def export_snapshot(plan: RoutingPlan, g: EnergyGraph, format: str = "json") -> str:
    """Render a plan as Graphviz DOT or as JSON (graph + plan, loss-free round trip)."""
    roles = plan.node_roles()
    if format == "json":
        doc = {
            "graph": g.to_document(),
            "plan": plan.to_dict(),
            "node_roles": [
                {"id": n, "roles": sorted(r.value for r in roles.get(n, {Role.IDLE})),
                 "color": ROLE_COLORS[primary_role(roles.get(n, set()))]}
                for n in g.nodes
            ],
        }
        return json.dumps(doc, indent=2)
    if format == "dot":
        lines = ["digraph energy {", "  node [style=filled, shape=circle];"]
        for n in g.nodes:
            r = roles.get(n, set())
            label = ",".join(sorted(x.value for x in r)) or "idle"
            lines.append(f'  "{n}" [fillcolor={ROLE_COLORS[primary_role(r)]}, tooltip="{label}"];')
        for a, b, w in g.edges:
            p = g.edge_probability.get((a, b))
            extra = f', label="{p:g}"' if p is not None else ""
            lines.append(f'  "{a}" -> "{b}" [dir=none, color=darkgray{extra}];')
        for asg in plan.assignments:
            for u, v in zip(asg.path, asg.path[1:]):
                lines.append(f'  "{u}" -> "{v}" [color={PATH_COLOR}, penwidth=2];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown snapshot format {format!r}")


def import_snapshot(text: str) -> tuple[RoutingPlan, EnergyGraph]:
    doc = json.loads(text)
    return RoutingPlan.from_dict(doc["plan"]), load_topology(doc["graph"])
