"""Ground-vehicle planning on the road network.

Dijkstra shortest paths over the road graph, per-sub-area take-off/landing
spot selection (the car can only stop at road nodes), and the open
asymmetric-TSP tour over sub-areas solved by Held-Karp dynamic programming
(exact up to 15 sub-areas, greedy + or-opt beyond).
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, InvalidGeometryError

_EXACT_ATSP_LIMIT = 15


@dataclass
class RoadGraph:
    """Weighted undirected road network; weights are polyline lengths."""

    nodes: np.ndarray  # (n, 2)
    adjacency: list[list[tuple[int, float, np.ndarray]]] = field(default_factory=list)

    @classmethod
    def from_edges(cls, nodes, edges) -> "RoadGraph":
        """edges: iterable of (i, j, polyline (m,2) or None)."""
        nodes = np.asarray(nodes, dtype=float)
        adjacency: list[list[tuple[int, float, np.ndarray]]] = [[] for _ in range(len(nodes))]
        for i, j, poly in edges:
            if poly is None:
                poly = np.vstack([nodes[i], nodes[j]])
            poly = np.asarray(poly, dtype=float)
            w = float(np.linalg.norm(np.diff(poly, axis=0), axis=1).sum())
            chord = float(np.linalg.norm(nodes[j] - nodes[i]))
            if w <= 0:
                raise InvalidGeometryError(f"road edge {i}-{j} has non-positive length")
            if w < chord - 1e-6:
                raise InvalidGeometryError(f"road edge {i}-{j} shorter than its endpoints' distance")
            adjacency[i].append((j, w, poly))
            adjacency[j].append((i, w, poly[::-1].copy()))
        return cls(nodes=nodes, adjacency=adjacency)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return True
        seen = {0}
        frontier = [0]
        while frontier:
            v = frontier.pop()
            for u, _, _ in self.adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    frontier.append(u)
        return len(seen) == self.n_nodes


def shortest_path(g: RoadGraph, a: int, b: int) -> tuple[float, np.ndarray]:
    """Minimal-weight path from node a to node b: (distance, polyline)."""
    if not (0 <= a < g.n_nodes and 0 <= b < g.n_nodes):
        raise ValueError(f"nodes {a}, {b} outside graph of size {g.n_nodes}")
    if a == b:
        return 0.0, g.nodes[a][None, :].copy()
    dist = {a: 0.0}
    prev: dict[int, tuple[int, np.ndarray]] = {}
    heap = [(0.0, a)]
    while heap:
        d, v = heapq.heappop(heap)
        if v == b:
            break
        if d > dist.get(v, math.inf):
            continue
        for u, w, poly in g.adjacency[v]:
            nd = d + w
            if nd < dist.get(u, math.inf) - 1e-15:
                dist[u] = nd
                prev[u] = (v, poly)
                heapq.heappush(heap, (nd, u))
    if b not in dist:
        raise InfeasibleError(f"road nodes {a} and {b} are disconnected", stage="routing")
    legs = []
    v = b
    while v != a:
        p, poly = prev[v]
        legs.append(poly)
        v = p
    pts = [g.nodes[a][None, :]]
    for poly in reversed(legs):
        pts.append(poly[1:])
    return dist[b], np.vstack(pts)


def select_car_spots(subplan, g: RoadGraph, comm_radius: float) -> tuple[int, int]:
    """Take-off and landing road nodes for one sub-area.

    Candidates are road nodes within the communication radius of every
    access point; among them the start spot minimises the sum of squared
    distances to each UAV's first access point and the end spot to the last
    ones. Ties break to the lower node id.
    """
    if g.n_nodes == 0:
        raise InfeasibleError("no road nodes available", stage="routing")
    routes = [r for r in subplan.routes if r]
    firsts = np.array([subplan.access_points[r[0]] for r in routes])
    lasts = np.array([subplan.access_points[r[-1]] for r in routes])
    all_pts = np.asarray(subplan.access_points, dtype=float)

    d_all = np.linalg.norm(g.nodes[:, None, :] - all_pts[None, :, :], axis=2)
    candidates = np.flatnonzero(d_all.max(axis=1) <= comm_radius + 1e-9)
    if len(candidates) == 0:
        raise InfeasibleError(
            f"no road node lies within {comm_radius:.0f} m of every access point; "
            "re-partition with more sub-areas",
            stage="routing",
            constraint="communication radius",
        )

    def argmin_cost(targets):
        cost = ((g.nodes[candidates, None, :] - targets[None, :, :]) ** 2).sum(axis=(1, 2))
        best = np.flatnonzero(cost <= cost.min() + 1e-12)
        return int(candidates[best[0]])  # candidates ascending -> lowest id wins

    return argmin_cost(firsts), argmin_cost(lasts)


def _held_karp(cost: np.ndarray, start: int | None) -> list[int]:
    n = len(cost)
    starts = [start] if start is not None else list(range(n))
    best_order, best_val = None, math.inf
    for s in starts:
        dp = np.full((1 << n, n), math.inf)
        parent = np.full((1 << n, n), -1, dtype=np.int64)
        dp[1 << s, s] = 0.0
        for mask in range(1 << n):
            if not mask & (1 << s):
                continue
            row = dp[mask]
            for last in range(n):
                if not mask & (1 << last) or row[last] == math.inf:
                    continue
                base = row[last]
                for j in range(n):
                    if mask & (1 << j):
                        continue
                    nm = mask | (1 << j)
                    cand = base + cost[last, j]
                    if cand < dp[nm, j]:
                        dp[nm, j] = cand
                        parent[nm, j] = last
        full = (1 << n) - 1
        last = int(np.argmin(dp[full]))
        val = float(dp[full, last])
        if val < best_val - 1e-15:
            best_val = val
            order = []
            mask = full
            v = last
            while v != -1:
                order.append(v)
                pv = int(parent[mask, v])
                mask ^= 1 << v
                v = pv
            best_order = order[::-1]
    return best_order


def _greedy_oropt(cost: np.ndarray, start: int | None) -> list[int]:
    n = len(cost)
    s = start if start is not None else 0
    order = [s]
    remaining = set(range(n)) - {s}
    while remaining:
        last = order[-1]
        nxt = min(remaining, key=lambda j: (cost[last, j], j))
        order.append(nxt)
        remaining.remove(nxt)

    def total(o):
        return sum(cost[o[i], o[i + 1]] for i in range(len(o) - 1))

    improved = True
    while improved:
        improved = False
        base = total(order)
        for seg_len in (1, 2, 3):
            for i in range(1 if start is not None else 0, len(order) - seg_len + 1):
                seg = order[i : i + seg_len]
                rest = order[:i] + order[i + seg_len :]
                for j in range(1 if start is not None else 0, len(rest) + 1):
                    cand = rest[:j] + seg + rest[j:]
                    val = total(cand)
                    if val < base - 1e-12:
                        order, base = cand, val
                        improved = True
    return order


def atsp_order(cost: np.ndarray, start: int | None = None) -> list[int]:
    """Open Hamiltonian path order minimising total asymmetric cost.

    Held-Karp (exact) up to 15 nodes, greedy + or-opt beyond. The diagonal is
    ignored; with no ``start`` the best starting node is chosen.
    """
    cost = np.asarray(cost, dtype=float)
    n = len(cost)
    if n == 0:
        raise ValueError("empty cost matrix")
    if cost.shape != (n, n):
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if np.any(cost[~np.eye(n, dtype=bool)] < 0):
        raise ValueError("costs must be non-negative")
    if start is not None and not 0 <= start < n:
        raise ValueError(f"start {start} out of range")
    if n == 1:
        return [0]
    if n <= _EXACT_ATSP_LIMIT:
        return _held_karp(cost, start)
    return _greedy_oropt(cost, start)


def build_intersubarea_costs(spots: list[tuple[int, int]], g: RoadGraph) -> np.ndarray:
    """cost[i][j] = road distance from sub-area i's end spot to j's start spot."""
    n = len(spots)
    cost = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            cost[i, j], _ = shortest_path(g, spots[i][1], spots[j][0])
    return cost


@dataclass
class CarPlan:
    """Ground-vehicle itinerary over all sub-areas."""

    spots: list[tuple[int, int]]  # per sub-area (start node, end node)
    visit_order: list[int]
    legs: list[np.ndarray]  # polyline end_spot[i] -> start_spot[i+1]
    total_distance: float
    within_legs: list[np.ndarray] = field(default_factory=list)
    within_distance: float = 0.0


def plan_car_tour(spots: list[tuple[int, int]], g: RoadGraph, start: int | None = None) -> CarPlan:
    """ATSP over sub-areas plus the within-sub-area start->end road legs."""
    cost = build_intersubarea_costs(spots, g)
    order = atsp_order(cost, start)
    legs = []
    total = 0.0
    for a, b in zip(order[:-1], order[1:]):
        d, poly = shortest_path(g, spots[a][1], spots[b][0])
        legs.append(poly)
        total += d
    within_legs = []
    within = 0.0
    for i in order:
        d, poly = shortest_path(g, spots[i][0], spots[i][1])
        within_legs.append(poly)
        within += d
    return CarPlan(
        spots=list(spots),
        visit_order=order,
        legs=legs,
        total_distance=float(total),
        within_legs=within_legs,
        within_distance=float(within),
    )
