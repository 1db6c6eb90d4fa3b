"""Trail-to-UAV assignment via a random-key GA over access points.

Each chromosome holds one key in [0, 1) per trail; a key decodes to the
point that far along the trail perimeter. Fixing the access points turns the
assignment problem into a modified VRP (capacity per battery charge, free
route start/end, min-max tour objective), solved exactly by subset dynamic
programming for up to 8 trails and by nearest-neighbour insertion plus local
search beyond that. The GA fitness of a chromosome is its longest tour.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import GAParams
from .errors import InfeasibleError, InvalidGeometryError
from .trails import Trail

_EXACT_LIMIT = 8


@dataclass
class TrailAssignment:
    """Routes per UAV plus the access point chosen on every trail."""

    routes: list[list[int]]
    access_points: np.ndarray
    route_lengths: list[float]
    longest_tour: float
    battery_loads: list[float]
    transition_lengths: list[float]
    depot: tuple[float, float] | None = None

    def validate(self, trail_costs, capacity: float) -> None:
        """Re-check the partition-of-trails and battery invariants."""
        visited = sorted(t for r in self.routes for t in r)
        if visited != list(range(len(trail_costs))):
            raise InfeasibleError("routes do not partition the trail set", stage="assignment")
        for k, route in enumerate(self.routes):
            load = float(sum(trail_costs[t] for t in route))
            if load > capacity * (1 + 1e-9) + 1e-9:
                raise InfeasibleError(
                    f"UAV {k} battery load {load:.1f} m exceeds budget {capacity:.1f} m",
                    stage="assignment",
                    constraint="battery",
                )


def encode(x, trail: Trail, tol: float = 1e-6) -> float:
    """Normalised arc-length of a point on the trail, measured from vertex 0."""
    x = np.asarray(x, dtype=float)
    best = None
    for i, edge in enumerate(trail.edges):
        q, dist = edge.project(x)
        if best is None or dist < best[0]:
            best = (dist, i, q)
    dist, i, q = best
    if dist > tol:
        raise InvalidGeometryError(f"point {x} is {dist:.2e} m from the trail (> {tol:g})")
    key = trail.vertex_keys[i] + float(np.linalg.norm(q - trail.ring[i])) / trail.perimeter
    return key % 1.0


def decode(p: float, trail: Trail) -> np.ndarray:
    """Inverse of encode: the point at arc length p x perimeter from vertex 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"key must lie in [0, 1), got {p}")
    idx = int(np.searchsorted(trail.vertex_keys, p, side="right")) - 1
    v0 = trail.ring[idx]
    v1 = trail.ring[(idx + 1) % len(trail.ring)]
    d = v1 - v0
    return v0 + (p - trail.vertex_keys[idx]) * trail.perimeter * d / np.linalg.norm(d)


def _route_transitions(route, dist, depot_dist=None) -> float:
    t = sum(dist[route[i], route[i + 1]] for i in range(len(route) - 1))
    if depot_dist is not None and route:
        t += depot_dist[route[0]] + depot_dist[route[-1]]
    return float(t)


def _assemble(routes, points, costs, dist, k, depot, depot_dist) -> TrailAssignment:
    routes = [[int(t) for t in r] for r in routes]
    routes += [[] for _ in range(k - len(routes))]
    routes.sort(key=lambda r: (r[0] if r else np.inf))
    loads = [float(sum(costs[t] for t in r)) for r in routes]
    trans = [_route_transitions(r, dist, depot_dist) for r in routes]
    lengths = [ld + tr for ld, tr in zip(loads, trans)]
    return TrailAssignment(
        routes=routes,
        access_points=points,
        route_lengths=lengths,
        longest_tour=float(max(lengths)) if lengths else 0.0,
        battery_loads=loads,
        transition_lengths=trans,
        depot=tuple(depot) if depot is not None else None,
    )


def _exact_mvrp(points, costs, k, capacity, dist, depot_dist):
    n = len(costs)
    full = 1 << n
    csum = np.zeros(full)
    for m in range(1, full):
        low = m & -m
        csum[m] = csum[m ^ low] + costs[low.bit_length() - 1]

    # open-path DP: dp[mask][last] = min transition cost, path recovered via parent
    inf = math.inf
    dp = np.full((full, n), inf)
    parent = np.full((full, n), -1, dtype=np.int64)
    for i in range(n):
        dp[1 << i, i] = depot_dist[i] if depot_dist is not None else 0.0
    for mask in range(1, full):
        for last in range(n):
            if not mask & (1 << last) or dp[mask, last] == inf:
                continue
            base = dp[mask, last]
            rest = (~mask) & (full - 1)
            nxt = rest
            while nxt:
                j = (nxt & -nxt).bit_length() - 1
                nm = mask | (1 << j)
                cand = base + dist[last, j]
                if cand < dp[nm, j]:
                    dp[nm, j] = cand
                    parent[nm, j] = last
                nxt &= nxt - 1

    path_cost = np.full(full, inf)
    path_last = np.full(full, -1, dtype=np.int64)
    for mask in range(1, full):
        row = dp[mask]
        if depot_dist is not None:
            row = row + depot_dist
        best = int(np.argmin(row))
        path_cost[mask] = row[best]
        path_last[mask] = best

    def block_cost(mask):
        return csum[mask] + path_cost[mask]

    best_obj = [inf]
    best_blocks = [None]

    def recurse(remaining, blocks, cur_max):
        if cur_max >= best_obj[0]:
            return
        if not remaining:
            best_obj[0] = cur_max
            best_blocks[0] = list(blocks)
            return
        if len(blocks) == k:
            return
        low = remaining & -remaining
        rest = remaining ^ low
        sub = rest
        while True:  # all submasks of rest, paired with the lowest element
            mask = sub | low
            if csum[mask] <= capacity * (1 + 1e-12) + 1e-9:
                blocks.append(mask)
                recurse(remaining ^ mask, blocks, max(cur_max, block_cost(mask)))
                blocks.pop()
            if sub == 0:
                break
            sub = (sub - 1) & rest
        return

    recurse(full - 1, [], 0.0)
    if best_blocks[0] is None:
        raise InfeasibleError(
            f"no battery-feasible split of {n} trails over {k} UAVs "
            f"(per-route budget {capacity:.1f} m)",
            stage="assignment",
            constraint="battery",
        )

    routes = []
    for mask in best_blocks[0]:
        order = []
        last = int(path_last[mask])
        m = mask
        while last >= 0:
            order.append(last)
            nlast = int(parent[m, last])
            m ^= 1 << last
            last = nlast
        order.reverse()
        routes.append(order)
    return routes


def _nn_chain(dist, start) -> list[int]:
    n = dist.shape[0]
    chain = [start]
    remaining = np.ones(n, dtype=bool)
    remaining[start] = False
    row = dist[start].copy()
    for _ in range(n - 1):
        row[~remaining] = np.inf
        nxt = int(np.argmin(row))
        chain.append(nxt)
        remaining[nxt] = False
        row = dist[nxt].copy()
    return chain


def _split_chain(chain, costs, dist, k, capacity):
    """Cut the NN chain into <= k consecutive routes minimising the longest.

    Binary search on the objective; a greedy walk checks whether the chain
    fits in k capacity-respecting pieces under a trial bound. Route cost of
    chain[a:b] separates into cumulative sums, so each cut is a searchsorted.
    """
    n = len(chain)
    c = costs[chain]
    cc = np.concatenate([[0.0], np.cumsum(c)])  # load of chain[a:b] = cc[b]-cc[a]
    legs = dist[chain[:-1], chain[1:]] if n > 1 else np.zeros(0)
    tt = np.concatenate([[0.0], np.cumsum(legs)])  # transitions of chain[a:b] = tt[b-1]-tt[a]
    s = cc[1:] + tt  # cost of chain[a:b] = s[b-1] - (cc[a] + tt[a])

    def cuts_for(bound):
        out = []
        a = 0
        for _ in range(k):
            if a >= n:
                break
            base_load = cc[a]
            base_cost = cc[a] + tt[a]
            b_cap = int(np.searchsorted(cc[1:], base_load + capacity * (1 + 1e-12) + 1e-9, side="right"))
            b_obj = int(np.searchsorted(s, base_cost + bound + 1e-12, side="right"))
            b = min(b_cap, b_obj)
            if b <= a:
                return None
            out.append((a, b))
            a = b
        return out if a >= n else None

    lo = float(c.max())
    hi = float(cc[-1] + tt[-1] if n > 1 else cc[-1])
    if cuts_for(hi) is None:
        raise InfeasibleError(
            f"cannot split trails into {k} routes within the battery budget {capacity:.1f} m",
            stage="assignment",
            constraint="battery",
        )
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if cuts_for(mid) is None:
            lo = mid
        else:
            hi = mid
    cuts = cuts_for(hi)
    return [list(chain[a:b]) for a, b in cuts]


def _two_opt(route, dist):
    """Vectorised best-improvement 2-opt for an open route."""
    route = list(route)
    while len(route) >= 3:
        m = len(route)
        r = np.asarray(route)
        A = dist[r[:, None], r]
        mid = A[np.arange(m - 1), np.arange(1, m)]
        e_prev = np.concatenate([[0.0], mid])        # d(route[i-1], route[i]), 0 at i=0
        e_next = np.concatenate([mid, [0.0]])        # d(route[j], route[j+1]), 0 at j=m-1
        removed = e_prev[:, None] + e_next[None, :]
        a_prev = np.vstack([np.zeros((1, m)), A[:-1, :]])   # d(route[i-1], route[j])
        a_next = np.hstack([A[:, 1:], np.zeros((m, 1))])    # d(route[i], route[j+1])
        delta = np.triu(a_prev + a_next - removed, k=1)
        i, j = np.unravel_index(np.argmin(delta), delta.shape)
        if delta[i, j] >= -1e-9:
            break
        route[i : j + 1] = route[i : j + 1][::-1]
    return route


def _removal_deltas(route, dist):
    """rem[a] = transition saved by removing position a from an open route."""
    m = len(route)
    if m == 0:
        return np.zeros(0)
    if m == 1:
        return np.zeros(1)
    r = np.asarray(route)
    mid = dist[r[:-1], r[1:]]
    left = np.concatenate([[0.0], mid])
    right = np.concatenate([mid, [0.0]])
    if m > 2:
        join = np.concatenate([[0.0], dist[r[:-2], r[2:]], [0.0]])
    else:
        join = np.zeros(2)
    return left + right - join


def _heuristic_mvrp(points, costs, k, capacity, dist, depot_dist):
    """Nearest-neighbour seeded construction + 2-opt / relocate / swap descent.

    Each improvement round scans every (longest route -> other route) pair
    with matrix-valued move deltas, so a round is a handful of numpy calls
    and a solve stays a few milliseconds even for ~150 trails.
    """
    cap = capacity * (1 + 1e-12) + 1e-9
    start = int(np.lexsort((points[:, 1], points[:, 0]))[0])
    chain = np.array(_nn_chain(dist, start))
    routes = _split_chain(chain, costs, dist, k, capacity)
    routes += [[] for _ in range(k - len(routes))]
    routes = [_two_opt(r, dist) for r in routes]

    loads = np.array([float(sum(costs[t] for t in r)) for r in routes])
    trans = np.array([_route_transitions(r, dist) for r in routes])

    for _ in range(80):
        cv = loads + trans
        objv = float(cv.max())
        w = int(np.argmax(cv))
        wr = np.array(routes[w], dtype=int)
        if len(wr) == 0:
            break
        costs_w = costs[wr]
        rem_w = _removal_deltas(routes[w], dist)
        new_w_after_removal = loads[w] - costs_w + trans[w] - rem_w

        best = None  # (new_obj, kind, payload)
        # relocate moves first; the pricier swap scan runs only when needed
        for do_swap in (False, True):
            if do_swap and best is not None:
                break
            for r in range(k):
                if r == w:
                    continue
                rr = np.array(routes[r], dtype=int)
                m_r = len(rr)
                cv_rest = cv.copy()
                cv_rest[[w, r]] = -np.inf
                base = float(cv_rest.max()) if k > 2 else 0.0
                dtr = dist[wr[:, None], rr] if m_r else np.zeros((len(wr), 0))

                if not do_swap:
                    ok_rel = loads[r] + costs_w <= cap
                    if not ok_rel.any():
                        continue
                    if m_r:
                        left = np.concatenate([np.zeros((len(wr), 1)), dtr], axis=1)
                        right = np.concatenate([dtr, np.zeros((len(wr), 1))], axis=1)
                        edge = np.concatenate([[0.0], dist[rr[:-1], rr[1:]], [0.0]]) if m_r > 1 else np.zeros(2)
                        ins = left + right - edge[None, :]
                    else:
                        ins = np.zeros((len(wr), 1))
                    new_r = loads[r] + costs_w[:, None] + trans[r] + ins
                    cand = np.maximum(base, np.maximum(new_w_after_removal[:, None], new_r))
                    cand[~ok_rel, :] = np.inf
                    a, p = np.unravel_index(np.argmin(cand), cand.shape)
                    if cand[a, p] < objv - 1e-9 and (best is None or cand[a, p] < best[0]):
                        best = (float(cand[a, p]), "relocate", (w, int(a), r, int(p)))
                elif m_r:
                    costs_r = costs[rr]
                    rem_r = _removal_deltas(routes[r], dist)
                    # add_r[a, b] = d(rr[b-1], wr[a]) + d(wr[a], rr[b+1]), virtual ends zero
                    nb_prev = np.concatenate([np.zeros((len(wr), 1)), dtr[:, :-1]], axis=1)
                    nb_next = np.concatenate([dtr[:, 1:], np.zeros((len(wr), 1))], axis=1)
                    add_r = nb_prev + nb_next
                    new_r_sw = loads[r] - costs_r + costs_w[:, None] + trans[r] - rem_r + add_r
                    p1 = np.vstack([np.zeros((1, m_r)), dtr[:-1, :]])  # d(wr[a-1], rr[b])
                    p2 = np.vstack([dtr[1:, :], np.zeros((1, m_r))])   # d(wr[a+1], rr[b])
                    new_w_sw = (loads[w] - costs_w + trans[w] - rem_w)[:, None] + costs_r[None, :] + p1 + p2
                    okw = loads[w] - costs_w[:, None] + costs_r[None, :] <= cap
                    okr = loads[r] - costs_r[None, :] + costs_w[:, None] <= cap
                    cand = np.maximum(base, np.maximum(new_r_sw, new_w_sw))
                    cand[~(okw & okr)] = np.inf
                    a, b = np.unravel_index(np.argmin(cand), cand.shape)
                    if cand[a, b] < objv - 1e-9 and (best is None or cand[a, b] < best[0]):
                        best = (float(cand[a, b]), "swap", (w, int(a), r, int(b)))

        if best is None:
            break
        _, kind, payload = best
        if kind == "relocate":
            w, a, r, p = payload
            t = routes[w].pop(a)
            routes[r].insert(p, t)
        else:
            w, a, r, b = payload
            routes[w][a], routes[r][b] = routes[r][b], routes[w][a]
        for q in (w, r):
            routes[q] = _two_opt(routes[q], dist)
            loads[q] = float(costs[np.array(routes[q], int)].sum()) if routes[q] else 0.0
            trans[q] = _route_transitions(routes[q], dist)

    return [r for r in routes if r]


def mvrp_solve(access_points, k: int, trail_costs, capacity: float, depot=None) -> TrailAssignment:
    """Assign every trail to one UAV route minimising the longest tour.

    A route's tour length is its trail perimeters plus inter-access-point
    transitions (plus depot legs when a depot is given); only the perimeter
    sum is held to the battery budget. Exact for up to 8 trails.
    """
    points = np.asarray(access_points, dtype=float)
    costs = np.asarray(trail_costs, dtype=float)
    n = len(costs)
    if n == 0 or k < 1:
        raise ValueError("need at least one trail and one UAV")
    total = float(costs.sum())
    if total > k * capacity * (1 + 1e-12) + 1e-9:
        raise InfeasibleError(
            f"total trail length {total:.1f} m exceeds fleet budget "
            f"{k} x {capacity:.1f} m = {k * capacity:.1f} m",
            stage="assignment",
            constraint="battery",
        )
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    depot_dist = None
    if depot is not None:
        depot_dist = np.linalg.norm(points - np.asarray(depot, dtype=float), axis=1)

    if n <= _EXACT_LIMIT:
        routes = _exact_mvrp(points, costs, k, capacity, dist, depot_dist)
    else:
        routes = _heuristic_mvrp(points, costs, k, capacity, dist, depot_dist)
    return _assemble(routes, points, costs, dist, k, depot, depot_dist)


def decode_population(population: np.ndarray, trails: list[Trail]) -> np.ndarray:
    """Decode an (N, N_t) key matrix to an (N, N_t, 2) access-point array."""
    population = np.atleast_2d(np.asarray(population, dtype=float))
    n_chrom, n_trails = population.shape
    out = np.empty((n_chrom, n_trails, 2))
    for j, trail in enumerate(trails):
        keys = population[:, j]
        idx = np.searchsorted(trail.vertex_keys, keys, side="right") - 1
        v0 = trail.ring[idx]
        v1 = trail.ring[(idx + 1) % len(trail.ring)]
        d = v1 - v0
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        out[:, j, :] = v0 + (keys - trail.vertex_keys[idx])[:, None] * trail.perimeter * d
    return out


def evaluate_fitness(population, k: int, trails: list[Trail], capacity: float):
    """Fitness (longest tour) of every chromosome, sorted ascending.

    Battery-infeasible chromosomes get +inf fitness instead of aborting the
    generation. Returns (sorted population, fitnesses, assignments).
    """
    population = np.atleast_2d(np.asarray(population, dtype=float))
    if population.size == 0:
        raise ValueError("empty population")
    costs = np.array([t.perimeter for t in trails])
    all_points = decode_population(population, trails)
    fitnesses = np.empty(len(population))
    assignments: list[TrailAssignment | None] = []
    for i in range(len(population)):
        try:
            asg = mvrp_solve(all_points[i], k, costs, capacity)
            fitnesses[i] = asg.longest_tour
            assignments.append(asg)
        except InfeasibleError:
            fitnesses[i] = np.inf
            assignments.append(None)
    order = np.argsort(fitnesses, kind="stable")
    return population[order], fitnesses[order], [assignments[i] for i in order]


def _stream(rng_seed: int, generation: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((rng_seed, generation, index)))


def rkga_run(trails: list[Trail], k: int, capacity: float, ga: GAParams, rng_seed: int) -> TrailAssignment:
    """Evolve access-point keys; return the best chromosome's assignment.

    Elites survive unchanged each generation, so the best fitness is
    monotone non-increasing. Deterministic for a fixed rng_seed.
    """
    n_trails = len(trails)
    if n_trails == 0:
        raise ValueError("no trails to assign")
    pop = np.vstack([_stream(rng_seed, 0, i).uniform(0.0, 1.0, n_trails) for i in range(ga.population)])
    pop, fits, assigns = evaluate_fitness(pop, k, trails, capacity)

    elite = ga.elite_count
    best_history = [float(fits[0])]
    for gen in range(1, ga.generations + 1):
        n_children = ga.population - elite
        children = np.empty((n_children, n_trails))
        for j in range(n_children):
            rng = _stream(rng_seed, gen, j)
            pa = pop[int(rng.integers(0, elite))]
            pb = pop[elite + int(rng.integers(0, ga.population - elite))]
            take_elite = rng.uniform(size=n_trails) < ga.crossover_rate
            child = np.where(take_elite, pa, pb)
            mutate = rng.uniform(size=n_trails) < ga.mutation_rate
            child[mutate] = rng.uniform(0.0, 1.0, int(mutate.sum()))
            children[j] = child
        child_pop, child_fits, child_assigns = evaluate_fitness(children, k, trails, capacity)
        pop = np.vstack([pop[:elite], child_pop])
        fits = np.concatenate([fits[:elite], child_fits])
        assigns = assigns[:elite] + child_assigns
        order = np.argsort(fits, kind="stable")
        pop, fits = pop[order], fits[order]
        assigns = [assigns[i] for i in order]
        assert fits[0] <= best_history[-1] + 1e-9, "elites must preserve the best fitness"
        best_history.append(float(fits[0]))
        if ga.stall_generations and len(best_history) > ga.stall_generations:
            gain = best_history[-1 - ga.stall_generations] - best_history[-1]
            if gain <= ga.stall_rel_tol * max(abs(best_history[-1]), 1.0):
                break

    if assigns[0] is None or not np.isfinite(fits[0]):
        raise InfeasibleError(
            "every chromosome is battery-infeasible", stage="assignment", constraint="battery"
        )
    return assigns[0]
