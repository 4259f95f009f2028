"""Road network with congestion-dependent travel times."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

HOURS_PER_DAY = 24
ROUTE_ARITY = 4


class NoRouteError(LookupError):
    pass


@dataclass(frozen=True)
class Road:
    """Undirected road. ``free_time`` in hours, ``capacity`` and ``volume`` in vehicles/h."""

    id: int
    a: int
    b: int
    free_time: float
    capacity: float
    alpha: float = 0.15
    beta: float = 4.0
    volume: tuple[float, ...] = (0.0,) * HOURS_PER_DAY

    def __post_init__(self):
        if self.free_time <= 0 or self.capacity <= 0:
            raise ValueError(f"road {self.id}: free_time and capacity must be positive")
        if self.alpha < 0 or self.beta < 1:
            raise ValueError(f"road {self.id}: need alpha >= 0 and beta >= 1")
        if len(self.volume) != HOURS_PER_DAY or min(self.volume) < 0:
            raise ValueError(f"road {self.id}: volume needs 24 nonnegative hourly values")


def travel_time(road: Road, t: int, volume: float | None = None) -> float:
    """BPR travel time in hours at hour ``t`` (or for an explicit ``volume``)."""
    v = road.volume[t % HOURS_PER_DAY] if volume is None else volume
    return road.free_time * (1.0 + road.alpha * (v / road.capacity) ** road.beta)


@dataclass(frozen=True)
class TransportGraph:
    nodes: tuple[int, ...]
    roads: tuple[Road, ...]
    ms_nodes: dict[int, int] = field(default_factory=dict)  # station id -> node
    rc_nodes: dict[int, int] = field(default_factory=dict)  # damageable line id -> node
    rc_depot: int | None = None
    names: dict[int, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        known = set(self.nodes)
        for r in self.roads:
            if r.a not in known or r.b not in known:
                raise ValueError(f"road {r.id} references an unknown node")
        for what, mapping in (("station", self.ms_nodes), ("line", self.rc_nodes)):
            for k, n in mapping.items():
                if n not in known:
                    raise ValueError(f"{what} {k} mapped to unknown node {n}")
        if self.rc_depot is not None and self.rc_depot not in known:
            raise ValueError("rc_depot is not a node")

    def adjacency(self) -> dict[int, list[tuple[int, int]]]:
        adj: dict[int, list[tuple[int, int]]] = {n: [] for n in self.nodes}
        for i, r in enumerate(self.roads):
            adj[r.a].append((r.b, i))
            adj[r.b].append((r.a, i))
        return adj

    def incident_roads(self, node: int) -> list[Road]:
        return [r for r in self.roads if node in (r.a, r.b)]

    def candidate_nodes(self) -> list[int]:
        out = set(self.ms_nodes.values()) | set(self.rc_nodes.values())
        if self.rc_depot is not None:
            out.add(self.rc_depot)
        return sorted(out)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n, "name": self.names.get(n, str(n))} for n in self.nodes],
            "roads": [
                {"id": r.id, "a": r.a, "b": r.b, "free_time": r.free_time, "capacity": r.capacity,
                 "alpha": r.alpha, "beta": r.beta, "volume": list(r.volume)}
                for r in self.roads
            ],
            "ms_nodes": {str(k): v for k, v in self.ms_nodes.items()},
            "rc_nodes": {str(k): v for k, v in self.rc_nodes.items()},
            "rc_depot": self.rc_depot,
        }


def graph_from_dict(raw: dict) -> TransportGraph:
    nodes = tuple(int(n["id"]) if isinstance(n, dict) else int(n) for n in raw["nodes"])
    names = {int(n["id"]): str(n.get("name", n["id"])) for n in raw["nodes"] if isinstance(n, dict)}
    roads = []
    for r in raw.get("roads", []):
        vol = r.get("volume", [0.0] * HOURS_PER_DAY)
        roads.append(Road(
            id=int(r["id"]), a=int(r["a"]), b=int(r["b"]),
            free_time=float(r["free_time"]), capacity=float(r["capacity"]),
            alpha=float(r.get("alpha", 0.15)), beta=float(r.get("beta", 4.0)),
            volume=tuple(float(v) for v in vol),
        ))
    return TransportGraph(
        nodes=nodes,
        roads=tuple(roads),
        ms_nodes={int(k): int(v) for k, v in raw.get("ms_nodes", {}).items()},
        rc_nodes={int(k): int(v) for k, v in raw.get("rc_nodes", {}).items()},
        rc_depot=None if raw.get("rc_depot") is None else int(raw["rc_depot"]),
        names=names,
    )


class RouteTable:
    """Shortest travel durations per departure hour, computed lazily.

    ``volumes`` optionally overrides the road profiles with a
    ``(hours, n_roads)`` array (e.g. one day of a profile set).
    """

    def __init__(self, graph: TransportGraph, volumes: np.ndarray | None = None):
        self.graph = graph
        self.volumes = volumes
        self._adj = graph.adjacency()
        self._cache: dict[tuple[int, int], dict[int, float]] = {}

    def _road_time(self, idx: int, t: int) -> float:
        road = self.graph.roads[idx]
        if self.volumes is None:
            return travel_time(road, t)
        return travel_time(road, t, float(self.volumes[t % len(self.volumes), idx]))

    def times_from(self, origin: int, t: int) -> dict[int, float]:
        key = (origin, t % HOURS_PER_DAY)
        if key not in self._cache:
            dist = {origin: 0.0}
            heap = [(0.0, origin)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist.get(u, math.inf):
                    continue
                for v, idx in self._adj[u]:
                    nd = d + self._road_time(idx, t)
                    if nd < dist.get(v, math.inf) - 1e-12:
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
            self._cache[key] = dist
        return self._cache[key]

    def travel_hours(self, origin: int, dest: int, t: int) -> float:
        if origin == dest:
            return 0.0
        times = self.times_from(origin, t)
        if dest not in times:
            raise NoRouteError(f"no route from node {origin} to node {dest}")
        return times[dest]

    def duration(self, origin: int, dest: int, t: int) -> int:
        """Whole hours needed to reach ``dest`` departing at hour ``t``."""
        return int(math.ceil(self.travel_hours(origin, dest, t) - 1e-9))


def route_duration(g: TransportGraph, origin: int, dest: int, t: int) -> int:
    return RouteTable(g).duration(origin, dest, t)


def available_moves(
    g: TransportGraph,
    unit_kind: str,
    at: int,
    t: int = 0,
    damaged_lines=None,
    arity: int = ROUTE_ARITY,
    table: RouteTable | None = None,
) -> list[int]:
    """Destinations reachable from ``at``; index 0 is ``at`` itself (stay).

    MPS units target station nodes; RCs target nodes of ``damaged_lines`` and
    the depot. The nearest ``arity - 1`` by duration (ties by node id) are kept.
    """
    table = table or RouteTable(g)
    if unit_kind in ("meg", "mess", "mps"):
        targets = set(g.ms_nodes.values())
    elif unit_kind == "rc":
        lines = g.rc_nodes.keys() if damaged_lines is None else damaged_lines
        targets = {g.rc_nodes[ln] for ln in lines if ln in g.rc_nodes}
        if g.rc_depot is not None:
            targets.add(g.rc_depot)
    else:
        raise ValueError(f"unknown unit kind {unit_kind!r}")
    targets.discard(at)
    times = table.times_from(at, t)
    reachable = [n for n in targets if n in times]
    reachable.sort(key=lambda n: (math.ceil(times[n] - 1e-9), times[n], n))
    return [at] + reachable[: arity - 1]


def move_mask(moves: list[int], arity: int = ROUTE_ARITY) -> np.ndarray:
    mask = np.zeros(arity, dtype=bool)
    mask[: len(moves)] = True
    return mask
