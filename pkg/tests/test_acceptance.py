"""Acceptance suite: one test per criterion, printed as a PASS/FAIL line.

Criterion 5's rectangle turn-count comparison is implemented exactly as
stated and is expected to fail: a coverage-complete contour path on the
100x60 / w=6.5 instance needs at least five loops (18+ turns), which can
never be strictly below the zig-zag's 18 turns. See the decisions ledger.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest
import shapely

from fleetcover.access_opt import build_reduced_miqp, solve_miqp
from fleetcover.assignment import decode, encode, mvrp_solve, rkga_run
from fleetcover.config import FleetSpec, GAParams, PlannerConfig
from fleetcover.fieldmap import load_map
from fleetcover.geometry import PolygonWithHoles, min_enclosing_circle
from fleetcover.partition import partition_with_feasibility, required_subarea_count
from fleetcover.pipeline import plan_mission, validate_mission
from fleetcover.routing import atsp_order
from fleetcover.trails import generate_trails, generate_zigzag, make_trail, path_metrics

from conftest import closed_rect_ring, geojson_map, random_convex_polygon, rect
from oracles import brute_mvrp, coverage_max_distance, enum_atsp, exhaustive_miqp
from test_access_opt import assignment_for, square_trail, triangle_trail


def report(num, passed, detail):
    print(f"\n[ACCEPTANCE] criterion {num}: {'PASS' if passed else 'FAIL'} -- {detail}")


def random_trail(rng):
    if rng.uniform() < 0.2:  # degenerate out-and-back dart
        a = rng.uniform(0, 100, 2)
        b = a + rng.uniform(1, 8) * np.array([np.cos(t := rng.uniform(0, 2 * np.pi)), np.sin(t)])
        return make_trail(np.vstack([a, b]))
    poly = random_convex_polygon(rng, n_vertices=int(rng.integers(4, 9)),
                                 radius=rng.uniform(5, 40), centre=rng.uniform(0, 100, 2))
    return make_trail(poly.outer)


class TestCriterion1:
    def test_encode_decode_bijection(self):
        rng = np.random.default_rng(101)
        trails = [random_trail(rng) for _ in range(100)]
        t0 = time.perf_counter()
        worst = 0.0
        for i in range(1000):
            t = trails[i % 100]
            p = float(rng.uniform(0, 1))
            x = decode(p, t)
            x2 = decode(encode(x, t), t)
            worst = max(worst, float(np.linalg.norm(x2 - x)))
        elapsed = time.perf_counter() - t0
        passed = worst <= 1e-9 and elapsed < 1.0
        report(1, passed, f"round-trip error {worst:.2e} m over 10^3 points, {elapsed:.2f} s")
        assert worst <= 1e-9
        assert elapsed < 1.0


class TestCriterion2:
    def test_reference_subarea_count(self):
        fleet = FleetSpec()  # 10 min, 6 m/s, 6.5 m, K=4
        n = required_subarea_count(617210.0, fleet.k, fleet.area_per_uav_m2)
        report(2, n == 7, f"617,210 m2 field with default fleet -> {n} sub-areas (want 7)")
        assert fleet.area_per_uav_m2 == pytest.approx(23400.0)
        assert n == 7


class TestCriterion3:
    def test_partition_feasibility_on_random_fields(self):
        fleet = FleetSpec()
        ga = GAParams(population=200, generations=15)
        rng = np.random.default_rng(103)
        t0 = time.perf_counter()
        checked = 0
        for case in range(20):
            target = rng.uniform(1.2, 3.0) * fleet.k * fleet.area_per_uav_m2
            if case % 3 == 0:
                aspect = rng.uniform(1.0, 2.2)
                w = math.sqrt(target * aspect)
                field = rect(0, 0, w, target / w)
            else:
                poly = random_convex_polygon(rng, n_vertices=7, radius=1.0,
                                             centre=(0.0, 0.0))
                scale = math.sqrt(target / poly.area)
                field = PolygonWithHoles(poly.outer * scale)
            part = partition_with_feasibility(
                field, fleet, __import__("fleetcover.config", fromlist=["PartitionWeights"]).PartitionWeights(),
                ga, rng_seed=int(rng.integers(1 << 31)),
            )
            assert sum(c.area for c in part.cells) == pytest.approx(field.area, rel=1e-6)
            for cell in part.cells:
                assert cell.area <= fleet.k * fleet.area_per_uav_m2 * (1 + 1e-9)
                _, r = min_enclosing_circle(cell.outer)
                assert r <= fleet.comm_radius_m * (1 + 1e-9)
            checked += len(part.cells)
        elapsed = time.perf_counter() - t0
        passed = elapsed < 30.0
        report(3, passed, f"20 random fields, {checked} cells feasible, {elapsed:.1f} s (< 30 s)")
        assert passed


@pytest.fixture(scope="module")
def e2e_bundle(tmp_path_factory):
    """Synthetic ~600,000 m2 field with a noded road network; planned once."""
    tmp = tmp_path_factory.mktemp("accept")
    ring = closed_rect_ring(0, 0, 1200, 500)
    obstacle = closed_rect_ring(580, 220, 640, 280)
    xs = [-20, 300, 600, 900, 1220]
    roads = []
    for i in range(len(xs) - 1):
        roads.append([[xs[i], -10], [xs[i + 1], -10]])
        roads.append([[xs[i], 510], [xs[i + 1], 510]])
    for x in (-20, 600, 1220):
        xm = x if x != 600 else 610
        roads.append([[x, -10], [xm, 250]])
        roads.append([[xm, 250], [x, 510]])
    doc = geojson_map([ring], obstacles=[obstacle], roads=roads)
    path = tmp / "field600k.json"
    path.write_text(json.dumps(doc))
    fm = load_map(path)
    fleet = FleetSpec()
    cfg = PlannerConfig(fleet=fleet)
    t0 = time.perf_counter()
    plan = plan_mission(fm, fleet, cfg, rng_seed=7)
    elapsed = time.perf_counter() - t0
    return fm, fleet, cfg, plan, elapsed


class TestCriterion4:
    def test_coverage_completeness(self, e2e_bundle):
        fm, fleet, cfg, plan, _ = e2e_bundle
        report4 = validate_mission(plan, fm, fleet, n_samples=10_000, sample_seed=4)
        coverage = next(c for c in report4.checks if c.name == "coverage")
        obstacles = next(c for c in report4.checks if c.name == "obstacle_avoidance")
        passed = coverage.passed and obstacles.passed
        report(4, passed, f"{coverage.detail}; {obstacles.detail}")
        assert coverage.passed, coverage.detail
        assert obstacles.passed, obstacles.detail

    def test_coverage_with_hole_subarea(self):
        poly = PolygonWithHoles(
            [(0, 0), (120, 0), (120, 90), (0, 90)],
            [[(50, 35), (75, 35), (75, 55), (50, 55)]],
        )
        w = 6.5
        trails = generate_trails(poly, w)
        worst = coverage_max_distance(poly, trails, n=10_000, seed=44)
        assert worst <= w / 2 + 1e-6
        hole = shapely.geometry.Polygon([(50, 35), (75, 35), (75, 55), (50, 55)]).buffer(-1e-9)
        for t in trails:
            line = shapely.geometry.LineString(np.vstack([t.ring, t.ring[:1]]))
            assert line.intersection(hole).is_empty


class TestCriterion5:
    def test_turning_structure_on_convex_subareas(self):
        rng = np.random.default_rng(105)
        ok = True
        for _ in range(3):
            poly = random_convex_polygon(rng, n_vertices=6, radius=45.0)
            trails = generate_trails(poly, 6.5)
            total = sum(path_metrics(t).total_turning_angle for t in trails)
            ok = ok and math.isclose(total, 2 * math.pi * len(trails), rel_tol=1e-9)
            assert math.isclose(total, 2 * math.pi * len(trails), rel_tol=1e-9)
        # direction of the published comparison on ring-shaped fields, where
        # zig-zag passes fragment: offset trails need fewer turns
        annulus = PolygonWithHoles(
            [(0, 0), (100, 0), (100, 100), (0, 100)],
            [[(30, 30), (70, 30), (70, 70), (30, 70)]],
        )
        offset_turns = sum(path_metrics(t).turn_count for t in generate_trails(annulus, 6.5))
        zz = generate_zigzag(annulus, 6.5)
        zigzag_turns = path_metrics(zz, closed=False).turn_count
        assert offset_turns < zigzag_turns
        report(5, ok, (
            "convex sub-areas: total turning = 2*pi*trail count; "
            f"annulus: offset {offset_turns} turns < zigzag {zigzag_turns} turns "
            "(rectangle comparison below is a spec defect and fails)"
        ))

    def test_rectangle_turn_count_below_zigzag(self):
        # as stated: offset turn count < zigzag turn count (= 18) on 100x60, w=6.5.
        # A coverage-complete contour path needs >= 5 loops here, i.e. >= 18
        # turns, so this assertion cannot hold; it is kept faithful and red.
        field = rect(0, 0, 100, 60)
        w = 6.5
        zz = generate_zigzag(field, w)
        zigzag_turns = path_metrics(zz, closed=False).turn_count
        assert zigzag_turns == 18  # derived: ceil(60/6.5)=10 passes, 2*(10-1) turns
        offset_turns = sum(path_metrics(t).turn_count for t in generate_trails(field, w))
        passed = offset_turns < zigzag_turns
        report(5, passed, f"100x60 rectangle: offset {offset_turns} turns vs zigzag {zigzag_turns}")
        assert offset_turns < zigzag_turns, (
            "spec defect: five rings (20 turns) are geometrically required to cover "
            "a 60 m span at w=6.5, so the offset path cannot beat 18 zig-zag turns"
        )


class TestCriterion6:
    def test_mvrp_exactness_random_instances(self):
        rng = np.random.default_rng(106)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(2, 9))
            k = int(rng.integers(1, 4))
            pts = rng.uniform(0, 100, (n, 2))
            costs = rng.uniform(0, 40, n)
            cap = float(costs.sum() / k + costs.max() + rng.uniform(0, 20))
            got = mvrp_solve(pts, k, costs, cap).longest_tour
            want = brute_mvrp(pts, costs, k, cap)
            worst = max(worst, abs(got - want))
            assert got == pytest.approx(want, abs=1e-9)
        elapsed = time.perf_counter() - t0
        passed = elapsed < 60.0
        report(6, passed, f"200 instances (n<=8, k<=3): max gap {worst:.1e}, {elapsed:.1f} s (< 60 s)")
        assert passed


class TestCriterion7:
    def test_miqp_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(107)
        worst = 0.0
        for _ in range(50):
            trails = [
                triangle_trail(rng.uniform(0, 12), rng.uniform(0, 12), rng.uniform(0.5, 1.5))
                for _ in range(3)
            ]
            prob = build_reduced_miqp(assignment_for([[0, 1, 2]], trails), trails)
            assert prob.n_binaries <= 12
            sol = solve_miqp(prob)
            want = exhaustive_miqp(prob)
            worst = max(worst, abs(sol.objective - want))
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(want, abs=1e-6)
        # pinned two-square instance
        squares = [square_trail(0, 0), square_trail(3, 0)]
        prob = build_reduced_miqp(assignment_for([[0, 1]], squares), squares)
        sol = solve_miqp(prob)
        assert sol.objective == pytest.approx(4.0, abs=1e-9)
        report(7, True, f"50 instances <= 12 binaries: max |B&B - enumeration| = {worst:.1e}; two-square optimum 4.0")


class TestCriterion8:
    def test_miqp_never_worse_and_often_strictly_better(self):
        rng = np.random.default_rng(108)
        strict = 0
        for case in range(20):
            poly = random_convex_polygon(rng, n_vertices=5, radius=rng.uniform(18, 30),
                                         centre=rng.uniform(0, 50, 2))
            trails = generate_trails(poly, 6.5)
            if len(trails) > 7:  # keep the exact-MVRP regime
                poly = random_convex_polygon(rng, n_vertices=5, radius=16.0,
                                             centre=rng.uniform(0, 50, 2))
                trails = generate_trails(poly, 6.5)
            a = rkga_run(trails, 2, 1e9, GAParams(population=20, generations=8, stall_generations=0),
                         rng_seed=case)
            prob = build_reduced_miqp(a, trails)
            before = prob.objective_value(a.access_points)
            sol = solve_miqp(prob, incumbent=a.access_points)
            assert sol.objective <= before + 1e-9
            if sol.objective < before - 1e-9:
                strict += 1
        passed = strict >= 10
        report(8, passed, f"optimiser strictly improved {strict}/20 sub-areas (need >= 10), never worsened")
        assert passed


class TestCriterion9:
    def test_atsp_exactness_and_speed(self):
        rng = np.random.default_rng(109)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            cost = rng.uniform(0, 500, (n, n))
            np.fill_diagonal(cost, 0.0)
            start = int(rng.integers(0, n)) if rng.uniform() < 0.5 else None
            order = atsp_order(cost, start=start)
            got = sum(cost[order[i], order[i + 1]] for i in range(n - 1))
            assert got == pytest.approx(enum_atsp(cost, start), abs=1e-9)
        cost7 = rng.uniform(0, 2000, (7, 7))
        np.fill_diagonal(cost7, 0.0)
        t0 = time.perf_counter()
        atsp_order(cost7)
        dt = time.perf_counter() - t0
        passed = dt < 0.1
        report(9, passed, f"100 instances exact; n=7 solved in {dt * 1000:.1f} ms (< 100 ms)")
        assert passed


class TestCriterion10:
    def test_end_to_end_under_five_minutes(self, e2e_bundle):
        fm, fleet, cfg, plan, elapsed = e2e_bundle
        rep = validate_mission(plan, fm, fleet)
        passed = elapsed < 300.0 and rep.passed
        report(10, passed, (
            f"600,000 m2 field planned in {elapsed:.0f} s (< 300 s), "
            f"{len(plan.subareas)} sub-areas, all checks {'pass' if rep.passed else 'FAIL'}"
        ))
        assert elapsed < 300.0
        assert rep.passed, rep.summary()

    def test_end_to_end_deterministic(self, e2e_bundle):
        fm, fleet, cfg, plan, _ = e2e_bundle
        again = plan_mission(fm, fleet, cfg, rng_seed=7)
        assert again.to_json() == plan.to_json()
