"""Template urban road graph and constant-speed edge-following mobility."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

LANE_WIDTH_M = 3.5
URBAN_SPEED_LIMIT_MS = 13.9
SPEED_BAND_MS = (8.3, 13.9)
ANTENNA_HEIGHT_M = 1.5


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    length: float
    lane_width: float = LANE_WIDTH_M
    speed_limit: float = URBAN_SPEED_LIMIT_MS


@dataclass(frozen=True)
class RoadGraph:
    nodes: tuple[tuple[float, float], ...]
    edges: tuple[Edge, ...]
    junctions: tuple[int, ...]
    bounds: float

    def __post_init__(self):
        for x, y in self.nodes:
            if not (0.0 <= x <= self.bounds and 0.0 <= y <= self.bounds):
                raise ValueError(f"node ({x}, {y}) outside [0, {self.bounds}]^2")
        n = len(self.nodes)
        for e in self.edges:
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise ValueError(f"edge {e} references a missing node")
        # cached adjacency for mobility
        out: list[list[int]] = [[] for _ in range(n)]
        for idx, e in enumerate(self.edges):
            out[e.src].append(idx)
        object.__setattr__(self, "_out", tuple(tuple(o) for o in out))

    def outgoing(self, node: int) -> tuple[int, ...]:
        return self._out[node]

    @property
    def total_length(self) -> float:
        return sum(e.length for e in self.edges)

    def point_on_edge(self, edge_id: int, offset: float) -> tuple[float, float]:
        e = self.edges[edge_id]
        (x0, y0), (x1, y1) = self.nodes[e.src], self.nodes[e.dst]
        t = offset / e.length
        return (x0 + t * (x1 - x0), y0 + t * (y1 - y0))

    def is_strongly_connected(self) -> bool:
        n = len(self.nodes)

        def reach(adj):
            seen = {0}
            stack = [0]
            while stack:
                u = stack.pop()
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            return len(seen) == n

        fwd = [[] for _ in range(n)]
        rev = [[] for _ in range(n)]
        for e in self.edges:
            fwd[e.src].append(e.dst)
            rev[e.dst].append(e.src)
        return reach(fwd) and reach(rev)

    def to_json(self) -> str:
        doc = {
            "bounds_m": self.bounds,
            "nodes": [{"id": i, "x": x, "y": y} for i, (x, y) in enumerate(self.nodes)],
            "edges": [
                {
                    "id": i,
                    "src": e.src,
                    "dst": e.dst,
                    "length_m": e.length,
                    "lane_width_m": e.lane_width,
                    "speed_limit_ms": e.speed_limit,
                }
                for i, e in enumerate(self.edges)
            ],
            "junctions": list(self.junctions),
        }
        return json.dumps(doc, indent=2)


@dataclass(frozen=True)
class KinematicState:
    position: tuple[float, float]
    speed: float
    current_edge: int
    edge_offset: float


# Road templates on the unit square: (polylines of node coordinates).
# Each polyline becomes a two-way road; shared points become intersections.
_TEMPLATES: dict[int, list[list[tuple[float, float]]]] = {
    1: [
        [(0.0, 0.5), (0.5, 0.5), (1.0, 0.5)],
        [(0.5, 0.5), (0.5, 1.0)],
    ],
    2: [
        [(0.0, 0.25), (0.5, 0.25), (1.0, 0.25)],
        [(0.0, 0.75), (0.5, 0.75), (1.0, 0.75)],
        [(0.5, 0.25), (0.5, 0.75)],
    ],
    3: [
        [(0.0, 0.25), (0.25, 0.25), (0.5, 0.25), (1.0, 0.25)],
        [(0.0, 0.75), (0.5, 0.75), (1.0, 0.75)],
        [(0.5, 0.25), (0.5, 0.75)],
        [(0.25, 0.25), (0.25, 0.0)],
    ],
    4: [
        [(0.0, 0.25), (1 / 3, 0.25), (2 / 3, 0.25), (1.0, 0.25)],
        [(0.0, 0.75), (1 / 3, 0.75), (2 / 3, 0.75), (1.0, 0.75)],
        [(1 / 3, 0.25), (1 / 3, 0.75)],
        [(2 / 3, 0.25), (2 / 3, 0.75)],
    ],
}


def build_default_map(bounds: float = 1000.0, junction_count: int = 2) -> RoadGraph:
    """Two parallel arterials joined by connectors, scaled to ``bounds`` meters.

    ``junction_count`` selects the template (1-4 supported). Every road is
    two-way, so the graph is strongly connected; map-edge endpoints act as
    turnarounds.
    """
    if not bounds > 0:
        raise ValueError(f"bounds must be positive, got {bounds}")
    if junction_count not in _TEMPLATES:
        raise ValueError(f"junction_count must be in 1..4, got {junction_count}")

    index: dict[tuple[float, float], int] = {}
    nodes: list[tuple[float, float]] = []

    def node_id(p):
        key = (round(p[0] * bounds, 9), round(p[1] * bounds, 9))
        if key not in index:
            index[key] = len(nodes)
            nodes.append(key)
        return index[key]

    edges: list[Edge] = []
    degree: dict[int, set[int]] = {}
    for line in _TEMPLATES[junction_count]:
        ids = [node_id(p) for p in line]
        for a, b in zip(ids, ids[1:]):
            (xa, ya), (xb, yb) = nodes[a], nodes[b]
            length = math.hypot(xb - xa, yb - ya)
            edges.append(Edge(a, b, length))
            edges.append(Edge(b, a, length))
            degree.setdefault(a, set()).add(b)
            degree.setdefault(b, set()).add(a)

    junctions = tuple(sorted(n for n, nbrs in degree.items() if len(nbrs) >= 3))
    graph = RoadGraph(tuple(nodes), tuple(edges), junctions, float(bounds))
    assert len(junctions) == junction_count
    return graph


def spawn_vehicles(
    graph: RoadGraph,
    n: int,
    rng: np.random.Generator,
    speed_band: tuple[float, float] = SPEED_BAND_MS,
) -> list[KinematicState]:
    """Place ``n`` vehicles uniformly over total lane length."""
    if n < 1:
        raise ValueError(f"need at least one vehicle, got {n}")
    lengths = np.array([e.length for e in graph.edges])
    cum = np.cumsum(lengths)
    states = []
    for _ in range(n):
        s = rng.random() * cum[-1]
        edge_id = int(np.searchsorted(cum, s, side="right"))
        edge_id = min(edge_id, len(lengths) - 1)
        offset = s - (cum[edge_id] - lengths[edge_id])
        offset = min(max(offset, 0.0), lengths[edge_id])
        speed = rng.uniform(*speed_band)
        speed = min(speed, graph.edges[edge_id].speed_limit)
        states.append(
            KinematicState(graph.point_on_edge(edge_id, offset), speed, edge_id, offset)
        )
    return states


def step_mobility(
    graph: RoadGraph,
    states: Sequence[KinematicState],
    dt: float,
    rng: np.random.Generator,
) -> list[KinematicState]:
    """Advance every vehicle along its edge by ``speed * dt``.

    At an edge end the next edge is drawn uniformly among the outgoing edges
    of the end node, one stream draw per transition, in vehicle order.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if dt == 0:
        return list(states)
    out = []
    for st in states:
        edge_id, offset, speed = st.current_edge, st.edge_offset + st.speed * dt, st.speed
        while offset > graph.edges[edge_id].length:
            offset -= graph.edges[edge_id].length
            choices = graph.outgoing(graph.edges[edge_id].dst)
            edge_id = choices[int(rng.integers(len(choices)))]
            speed = min(speed, graph.edges[edge_id].speed_limit)
        out.append(replace(st, position=graph.point_on_edge(edge_id, offset),
                           speed=speed, current_edge=edge_id, edge_offset=offset))
    return out


def positions_array(states: Sequence[KinematicState]) -> np.ndarray:
    return np.array([s.position for s in states], dtype=float).reshape(len(states), 2)


def pairwise_distance(states: Sequence[KinematicState], i: int, j: int) -> float:
    (xi, yi), (xj, yj) = states[i].position, states[j].position
    return math.hypot(xi - xj, yi - yj)


def distance_matrix(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
