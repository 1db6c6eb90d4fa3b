"""Access-point optimisation as a mixed-integer QP.

"Stay on trail i" is the disjunction "x_i lies on one of the trail's edges";
each edge contributes one indicator binary, and the convex-hull lifting turns
the implication into linear rows (auxiliary point per segment, indicator-
scaled segment rows and trail bounding box). The solver runs branch-and-bound
on the indicators with convex QP relaxations: relaxing the lifting projects
x_i onto the convex hull of its candidate edges, so bounds come from small
dense QPs over hull constraints. Chains of trails visited by the same UAV
are independent subproblems and are solved separately.

The full assignment-plus-access MIQP (UAV x step x segment indicators) is
kept as a small-instance oracle: it enumerates battery-feasible ordered
assignments and prices each chain with the exact chain solver.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import MiqpBudget
from .errors import InfeasibleError
from .geometry import SegmentHalfspaces
from .qp import solve_qp
from .trails import Trail

_INT_TOL = 1e-9


@dataclass
class DisjunctionConstraint:
    """x_{var_id} must lie on exactly one of ``segments``; one binary each."""

    var_id: int
    segments: list[SegmentHalfspaces]
    binary_ids: list[int]


@dataclass
class MiqpProblem:
    """One 2-vector per trail, consecutive-trail quadratic coupling,
    one disjunction per trail."""

    n_trails: int
    objective_pairs: list[tuple[int, int]]
    disjunctions: list[DisjunctionConstraint]

    @property
    def n_binaries(self) -> int:
        return sum(len(d.binary_ids) for d in self.disjunctions)

    def objective_value(self, points) -> float:
        pts = np.asarray(points, dtype=float)
        return float(sum(np.sum((pts[i] - pts[j]) ** 2) for i, j in self.objective_pairs))

    def transition_length(self, points) -> float:
        """Linear (non-squared) total transition distance, for reporting."""
        pts = np.asarray(points, dtype=float)
        return float(sum(np.linalg.norm(pts[i] - pts[j]) for i, j in self.objective_pairs))


@dataclass
class MiqpSolution:
    points: np.ndarray
    chosen_segments: list[int]  # per trail, local segment index
    objective: float
    node_count: int
    status: str  # "optimal" | "incumbent" | "infeasible"

    def binaries(self, prob: MiqpProblem) -> dict[int, int]:
        out = {}
        for disj, chosen in zip(prob.disjunctions, self.chosen_segments):
            for local, bid in enumerate(disj.binary_ids):
                out[bid] = 1 if local == chosen else 0
        return out


def build_reduced_miqp(assignment, trails: list[Trail]) -> MiqpProblem:
    """Problem over the fixed trail assignment: objective couples consecutive
    trails on each UAV's route; one disjunction per trail."""
    routes = [r for r in assignment.routes if r]
    if not routes:
        raise ValueError("assignment has no routes")
    pairs = []
    for route in routes:
        pairs.extend((route[i], route[i + 1]) for i in range(len(route) - 1))
    next_id = itertools.count()
    disjunctions = [
        DisjunctionConstraint(
            var_id=i,
            segments=list(trails[i].edges),
            binary_ids=[next(next_id) for _ in trails[i].edges],
        )
        for i in range(len(trails))
    ]
    return MiqpProblem(n_trails=len(trails), objective_pairs=pairs, disjunctions=disjunctions)


# ---------------------------------------------------------------------------
# geometric helpers (scaled endpoint arrays drive the solver)


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    pts = np.unique(np.round(pts, 12), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                u = out[-1] - out[-2]
                v = p - out[-2]
                if u[0] * v[1] - u[1] * v[0] > 1e-14:
                    break
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    return hull if len(hull) >= 3 else pts[[0, -1]]


def _hull_rows(pts: np.ndarray):
    """Inequality/equality rows confining a 2-vector to conv(pts)."""
    hull = _convex_hull(pts)
    if len(hull) == 1:
        E = np.eye(2)
        return np.zeros((0, 2)), np.zeros(0), E, hull[0].copy(), hull[0].copy()
    if len(hull) == 2:
        a, b = hull
        d = b - a
        d = d / np.linalg.norm(d)
        n0 = np.array([-d[1], d[0]])
        A = np.vstack([-d, d])
        rhs = np.array([-float(d @ a), float(d @ b)])
        return A, rhs, n0[None, :], np.array([float(n0 @ a)]), (a + b) / 2
    rows, rhs = [], []
    m = len(hull)
    for i in range(m):
        v, w = hull[i], hull[(i + 1) % m]
        t = w - v
        n = np.array([t[1], -t[0]])  # outward for CCW
        n = n / np.linalg.norm(n)
        rows.append(n)
        rhs.append(float(n @ v))
    return np.array(rows), np.array(rhs), np.zeros((0, 2)), np.zeros(0), hull.mean(axis=0)


def _segment_project(p, a, b):
    d = b - a
    denom = float(d @ d)
    t = 0.0 if denom == 0 else float(np.clip((p - a) @ d / denom, 0.0, 1.0))
    q = a + t * d
    return q, float(np.linalg.norm(p - q))


class _ChainSolver:
    """Branch-and-bound over one chain of trails coupled by consecutive pairs."""

    def __init__(self, trail_ids, pairs, seg_pts, budget_state):
        self.trail_ids = list(trail_ids)  # global ids, local order
        self.local = {t: i for i, t in enumerate(self.trail_ids)}
        self.pairs = [(self.local[i], self.local[j]) for i, j in pairs]
        self.seg_pts = [seg_pts[t] for t in self.trail_ids]  # (s_i, 2, 2) scaled
        self.budget = budget_state
        m = len(self.trail_ids)
        Q = np.zeros((2 * m, 2 * m))
        for a, b in self.pairs:
            for u in range(2):
                Q[2 * a + u, 2 * a + u] += 2.0
                Q[2 * b + u, 2 * b + u] += 2.0
                Q[2 * a + u, 2 * b + u] -= 2.0
                Q[2 * b + u, 2 * a + u] -= 2.0
        self.Q = Q
        self._hull_cache: dict = {}

    def objective(self, x) -> float:
        return float(sum(np.sum((x[a] - x[b]) ** 2) for a, b in self.pairs))

    def snap(self, x):
        """Project each point to the nearest segment of its trail."""
        pts = np.empty_like(x)
        choice = []
        for i, segs in enumerate(self.seg_pts):
            best = None
            for s, (a, b) in enumerate(segs):
                q, dist = _segment_project(x[i], a, b)
                if best is None or dist < best[0]:
                    best = (dist, s, q)
            pts[i] = best[2]
            choice.append(best[1])
        return pts, choice

    def _polish(self, x, choice):
        """Coordinate descent: optimal point on the whole trail given neighbours."""
        x = x.copy()
        neigh = [[] for _ in self.trail_ids]
        for a, b in self.pairs:
            neigh[a].append(b)
            neigh[b].append(a)
        for _ in range(6):
            moved = 0.0
            for i, segs in enumerate(self.seg_pts):
                if not neigh[i]:
                    continue
                target = x[neigh[i]].mean(axis=0)
                best = None
                for s, (a, b) in enumerate(segs):
                    q, dist = _segment_project(target, a, b)
                    if best is None or dist < best[0]:
                        best = (dist, s, q)
                moved += float(np.linalg.norm(x[i] - best[2]))
                x[i] = best[2]
                choice[i] = best[1]
            if moved < 1e-12:
                break
        return x, choice

    def relax(self, cand):
        m = len(self.trail_ids)
        A_blocks, b_rows, E_blocks, d_rows = [], [], [], []
        x0 = np.empty((m, 2))
        for i, cset in enumerate(cand):
            key = (i, cset)
            got = self._hull_cache.get(key)
            if got is None:
                pts = self.seg_pts[i][list(cset)].reshape(-1, 2)
                got = _hull_rows(pts)
                self._hull_cache[key] = got
            A, rhs, E, d, centre = got
            A_blocks.append((i, A, rhs))
            E_blocks.append((i, E, d))
            x0[i] = centre
        n = 2 * m
        rows = sum(len(rhs) for _, _, rhs in A_blocks)
        eqs = sum(len(d) for _, _, d in E_blocks)
        A = np.zeros((rows, n))
        b = np.zeros(rows)
        E = np.zeros((eqs, n))
        d = np.zeros(eqs)
        r = e = 0
        for i, Ab, rhs in A_blocks:
            A[r : r + len(rhs), 2 * i : 2 * i + 2] = Ab
            b[r : r + len(rhs)] = rhs
            r += len(rhs)
        for i, Eb, dd in E_blocks:
            E[e : e + len(dd), 2 * i : 2 * i + 2] = Eb
            d[e : e + len(dd)] = dd
            e += len(dd)
        res = solve_qp(self.Q, None, A, b, E, d, x0=x0.ravel())
        # a non-converged subproblem value is not a valid lower bound
        bound = res.objective if res.status == "optimal" else -math.inf
        return bound, res.x.reshape(m, 2)

    def solve(self, incumbent_x):
        """Returns (points, choices, objective, exhausted)."""
        x_inc, choice_inc = self.snap(incumbent_x)
        x_inc, choice_inc = self._polish(x_inc, choice_inc)
        best_obj = self.objective(x_inc)
        best = (x_inc, choice_inc)

        root = tuple(tuple(range(len(segs))) for segs in self.seg_pts)
        stack = [root]
        exhausted = True
        while stack:
            if self.budget["nodes"] <= 0 or time.monotonic() > self.budget["deadline"]:
                exhausted = False
                break
            self.budget["nodes"] -= 1
            cand = stack.pop()
            bound, x = self.relax(cand)
            if bound >= best_obj - 1e-12:
                continue
            # distance from each relaxed point to its nearest candidate segment
            worst_i, worst_dist, nearest = -1, -1.0, None
            near_choice = []
            for i, cset in enumerate(cand):
                bests = None
                for s in cset:
                    a, b = self.seg_pts[i][s]
                    _, dist = _segment_project(x[i], a, b)
                    if bests is None or dist < bests[0]:
                        bests = (dist, s)
                near_choice.append(bests[1])
                if len(cset) > 1 and bests[0] > worst_dist:
                    worst_i, worst_dist, nearest = i, bests[0], bests[1]
            if worst_dist <= 1e-9:
                # relaxation already sits on segments: integral-feasible
                snapped = np.empty_like(x)
                for i in range(len(cand)):
                    a, b = self.seg_pts[i][near_choice[i]]
                    snapped[i], _ = _segment_project(x[i], a, b)
                obj = self.objective(snapped)
                if obj < best_obj - 1e-15:
                    best_obj, best = obj, (snapped, near_choice)
                continue
            cset = cand[worst_i]
            take = tuple(s for s in cset if s == nearest)
            rest = tuple(s for s in cset if s != nearest)
            stack.append(cand[:worst_i] + (rest,) + cand[worst_i + 1 :])
            stack.append(cand[:worst_i] + (take,) + cand[worst_i + 1 :])
        return best[0], best[1], best_obj, exhausted


def _scale_info(prob: MiqpProblem):
    pts = np.vstack([
        seg.endpoints for d in prob.disjunctions for seg in d.segments
    ])
    lo = pts.min(axis=0)
    span = float(max((pts.max(axis=0) - lo).max(), 1e-12))
    return lo, span


def _scaled_segments(prob: MiqpProblem, lo, span):
    return [
        np.array([(seg.endpoints - lo) / span for seg in d.segments])
        for d in prob.disjunctions
    ]


def _components(prob: MiqpProblem):
    adj = {i: set() for i in range(prob.n_trails)}
    for i, j in prob.objective_pairs:
        adj[i].add(j)
        adj[j].add(i)
    seen, comps = set(), []
    for start in range(prob.n_trails):
        if start in seen or not adj[start]:
            continue
        comp, frontier = set(), {start}
        while frontier:
            v = frontier.pop()
            comp.add(v)
            seen.add(v)
            frontier |= adj[v] - comp
        comps.append(sorted(comp))
    return comps


def default_points(prob: MiqpProblem) -> np.ndarray:
    """First vertex of every trail; used when no incumbent is supplied."""
    return np.array([d.segments[0].endpoints[0] for d in prob.disjunctions])


def solve_miqp(prob: MiqpProblem, incumbent=None, budget: MiqpBudget | None = None) -> MiqpSolution:
    """Branch-and-bound with hull-relaxation QP bounds.

    The result never exceeds the incumbent objective (the incumbent is
    snapped onto its trails and kept as the starting upper bound). Status is
    "optimal" when every chain's tree was exhausted, "incumbent" when a node
    or time budget stopped the search early.
    """
    for d in prob.disjunctions:
        if not d.segments:
            return MiqpSolution(
                points=np.zeros((prob.n_trails, 2)),
                chosen_segments=[-1] * prob.n_trails,
                objective=math.inf,
                node_count=0,
                status="infeasible",
            )
    budget = budget or MiqpBudget()
    lo, span = _scale_info(prob)
    seg_pts = _scaled_segments(prob, lo, span)
    inc = default_points(prob) if incumbent is None else np.asarray(incumbent, dtype=float)
    inc_scaled = (inc - lo) / span

    points = inc_scaled.copy()
    choices = []
    # isolated trails keep their (snapped) incumbent point: no objective term
    for i, d in enumerate(prob.disjunctions):
        best = None
        for s in range(len(d.segments)):
            a, b = seg_pts[i][s]
            q, dist = _segment_project(inc_scaled[i], a, b)
            if best is None or dist < best[0]:
                best = (dist, s, q)
        points[i] = best[2]
        choices.append(best[1])

    state = {"nodes": budget.max_nodes, "deadline": time.monotonic() + budget.time_limit_s}
    status = "optimal"
    total_nodes = 0
    for comp in _components(prob):
        pairs = [(i, j) for i, j in prob.objective_pairs if i in comp]
        solver = _ChainSolver(comp, pairs, {t: seg_pts[t] for t in comp}, state)
        before = state["nodes"]
        x, choice, _, exhausted = solver.solve(inc_scaled[comp])
        total_nodes += before - state["nodes"]
        if not exhausted:
            status = "incumbent"
        for local, t in enumerate(comp):
            points[t] = x[local]
            choices[t] = choice[local]

    unscaled = points * span + lo
    return MiqpSolution(
        points=unscaled,
        chosen_segments=choices,
        objective=prob.objective_value(unscaled),
        node_count=total_nodes,
        status=status,
    )


def qp_relax(prob: MiqpProblem, fixings: dict[int, int] | None = None):
    """Convex relaxation value with optional per-trail segment fixings.

    Returns (lower bound, points, fractional indicator dict). Fixing every
    trail makes the relaxation the exact QP of that indicator combination;
    an infeasible fixing yields +inf.
    """
    fixings = fixings or {}
    lo, span = _scale_info(prob)
    seg_pts = _scaled_segments(prob, lo, span)
    for t, s in fixings.items():
        if not 0 <= s < len(prob.disjunctions[t].segments):
            return math.inf, None, None
    points = np.array([seg_pts[i][fixings.get(i, 0)][0] for i in range(prob.n_trails)])
    bound = 0.0
    state = {"nodes": 1, "deadline": time.monotonic() + 60}
    for comp in _components(prob):
        pairs = [(i, j) for i, j in prob.objective_pairs if i in comp]
        solver = _ChainSolver(comp, pairs, {t: seg_pts[t] for t in comp}, state)
        cand = tuple(
            (fixings[t],) if t in fixings else tuple(range(len(seg_pts[t]))) for t in comp
        )
        val, x = solver.relax(cand)
        bound += val
        points[comp] = x
    bound *= span**2
    unscaled = points * span + lo

    h_frac: dict[int, float] = {}
    for i, disj in enumerate(prob.disjunctions):
        dists = np.array([
            _segment_project(unscaled[i], *seg.endpoints)[1] for seg in disj.segments
        ])
        if i in fixings:
            weights = np.zeros(len(dists))
            weights[fixings[i]] = 1.0
        else:
            inv = 1.0 / np.maximum(dists, 1e-12)
            weights = inv / inv.sum()
        for bid, wgt in zip(disj.binary_ids, weights):
            h_frac[bid] = float(wgt)
    return bound, unscaled, h_frac


def check_hull_expansion(disj: DisjunctionConstraint, x, h, tol: float = 1e-7) -> bool:
    """Feasibility of the lifted system for integral indicators.

    With binaries fixed, the auxiliary point of the selected segment must
    equal x and satisfy that segment's rows (equality row exactly); all other
    auxiliaries collapse to zero via the indicator-scaled bounds.
    """
    h = np.asarray(h, dtype=float)
    if len(h) != len(disj.segments):
        raise ValueError("one indicator per segment required")
    if not np.all((np.abs(h) < tol) | (np.abs(h - 1) < tol)):
        raise ValueError("indicators must be integral")
    if abs(h.sum() - 1.0) > tol:
        return False
    x = np.asarray(x, dtype=float)
    chosen = int(np.argmax(h))
    seg = disj.segments[chosen]
    resid = seg.A @ x - seg.b
    if np.any(resid > tol) or abs(resid[seg.equality_row]) > tol:
        return False
    return bool(np.all(x >= seg.lb - tol) and np.all(x <= seg.ub + tol))


def dump_problem(prob: MiqpProblem) -> str:
    """Plain-text instance dump for external cross-checking.

    Format: one declaration per line.
      trails N / pairs P          -- sizes
      pair i j                    -- objective term |x_i - x_j|^2
      trail i segments S lb lx ly ub ux uy
      seg i s binary B x0 y0 x1 y1
      row i s a1 a2 rel b         -- halfspace rows, rel is <= or ==
    """
    out = [f"trails {prob.n_trails}", f"pairs {len(prob.objective_pairs)}"]
    for i, j in prob.objective_pairs:
        out.append(f"pair {i} {j}")
    for i, disj in enumerate(prob.disjunctions):
        seg0 = disj.segments[0]
        out.append(
            f"trail {i} segments {len(disj.segments)} "
            f"lb {seg0.lb[0]:.9g} {seg0.lb[1]:.9g} ub {seg0.ub[0]:.9g} {seg0.ub[1]:.9g}"
        )
        for s, (seg, bid) in enumerate(zip(disj.segments, disj.binary_ids)):
            (x0, y0), (x1, y1) = seg.endpoints
            out.append(f"seg {i} {s} binary {bid} {x0:.9g} {y0:.9g} {x1:.9g} {y1:.9g}")
            for r in range(3):
                rel = "==" if r == seg.equality_row else "<="
                out.append(
                    f"row {i} {s} {seg.A[r, 0]:.9g} {seg.A[r, 1]:.9g} {rel} {seg.b[r]:.9g}"
                )
    return "\n".join(out) + "\n"


@dataclass
class FullMiqpPlan:
    routes: list[list[int]]
    access_points: np.ndarray
    objective: float
    status: str
    node_count: int


def solve_full_miqp(
    trails: list[Trail],
    k: int,
    horizon: int,
    capacity: float,
    budget: MiqpBudget | None = None,
) -> FullMiqpPlan:
    """Globally optimal routes + access points for tiny instances.

    Enumerates battery-feasible ordered assignments (each trail exactly once,
    at most ``horizon`` trails per UAV; idle steps are implicit and cost
    nothing since an idle UAV parks at its first access point). Each
    candidate chain is priced by the exact chain solver. Intended as an
    oracle; the number of indicator variables must stay small.
    """
    n = len(trails)
    if k * horizon < n:
        raise ValueError(f"horizon too short: {k} UAVs x {horizon} steps < {n} trails")
    costs = np.array([t.perimeter for t in trails])
    if costs.sum() > k * capacity * (1 + 1e-12) + 1e-9:
        return FullMiqpPlan([], np.zeros((n, 2)), math.inf, "infeasible", 0)

    budget = budget or MiqpBudget(max_nodes=200000, time_limit_s=60.0)
    prob = build_reduced_miqp_from_routes([[i for i in range(n)]], trails)
    lo, span = _scale_info(prob)
    seg_pts = _scaled_segments(prob, lo, span)
    state = {"nodes": budget.max_nodes, "deadline": time.monotonic() + budget.time_limit_s}

    chain_cache: dict[tuple[int, ...], tuple[float, np.ndarray, bool]] = {}

    def chain_cost(order: tuple[int, ...]):
        key = order if order <= order[::-1] else order[::-1]
        got = chain_cache.get(key)
        if got is None:
            if len(key) == 1:
                got = (0.0, np.array([seg_pts[key[0]][0][0]]), True)
            else:
                pairs = [(key[t], key[t + 1]) for t in range(len(key) - 1)]
                solver = _ChainSolver(list(key), pairs, {t: seg_pts[t] for t in key}, state)
                x0 = np.array([seg_pts[t][0][0] for t in key])
                x, _, obj, exhausted = solver.solve(x0)
                got = (obj, x, exhausted)
            chain_cache[key] = got
        obj, x, exhausted = got
        if order == key:
            return obj, x, exhausted
        return obj, x[::-1], exhausted

    def best_order(mask_ids: tuple[int, ...]):
        best = None
        for perm in itertools.permutations(mask_ids):
            if perm[0] > perm[-1]:  # chain cost is reversal-symmetric
                continue
            obj, x, exhausted = chain_cost(perm)
            if best is None or obj < best[0]:
                best = (obj, perm, x, exhausted)
        return best

    ids = list(range(n))
    best_plan = None
    exhausted_all = True

    def partitions(remaining: tuple[int, ...], max_blocks: int):
        if not remaining:
            yield []
            return
        if max_blocks == 0:
            return
        head, rest = remaining[0], remaining[1:]
        for r in range(len(rest) + 1):
            for tail_ids in itertools.combinations(rest, r):
                block = (head,) + tail_ids
                if len(block) > horizon:
                    continue
                if costs[list(block)].sum() > capacity * (1 + 1e-12) + 1e-9:
                    continue
                leftover = tuple(t for t in rest if t not in tail_ids)
                for others in partitions(leftover, max_blocks - 1):
                    yield [block] + others

    for blocks in partitions(tuple(ids), k):
        total = 0.0
        plan = []
        ok = True
        for block in blocks:
            res = best_order(block)
            if res is None:
                ok = False
                break
            obj, perm, x, exhausted = res
            exhausted_all = exhausted_all and exhausted
            total += obj
            plan.append((perm, x))
        if ok and (best_plan is None or total < best_plan[0] - 1e-15):
            best_plan = (total, plan)

    if best_plan is None:
        return FullMiqpPlan([], np.zeros((n, 2)), math.inf, "infeasible", 0)
    total, plan = best_plan
    points = np.zeros((n, 2))
    routes = []
    for perm, x in plan:
        routes.append(list(perm))
        for local, t in enumerate(perm):
            points[t] = x[local] * span + lo
    routes.sort(key=lambda r: r[0])
    routes += [[] for _ in range(k - len(routes))]
    obj = MiqpProblem(
        n_trails=n,
        objective_pairs=[(r[i], r[i + 1]) for r in routes for i in range(len(r) - 1)],
        disjunctions=prob.disjunctions,
    ).objective_value(points)
    status = "optimal" if exhausted_all else "incumbent"
    return FullMiqpPlan(
        routes=routes,
        access_points=points,
        objective=obj,
        status=status,
        node_count=budget.max_nodes - state["nodes"],
    )


def build_reduced_miqp_from_routes(routes: list[list[int]], trails: list[Trail]) -> MiqpProblem:
    """Convenience constructor from raw route lists (no TrailAssignment needed)."""
    pairs = []
    for route in routes:
        pairs.extend((route[i], route[i + 1]) for i in range(len(route) - 1))
    next_id = itertools.count()
    disjunctions = [
        DisjunctionConstraint(
            var_id=i,
            segments=list(trails[i].edges),
            binary_ids=[next(next_id) for _ in trails[i].edges],
        )
        for i in range(len(trails))
    ]
    return MiqpProblem(n_trails=len(trails), objective_pairs=pairs, disjunctions=disjunctions)
