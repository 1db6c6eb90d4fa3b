"""End-to-end mission planning and validation.

plan_mission chains the four stages -- field partition, trail generation,
trail assignment with access-point optimisation, car routing -- and returns
a MissionPlan that serialises to a versioned, byte-stable JSON document.
validate_mission independently re-checks every mission constraint by
sampling and recomputation and reports pass/fail with worst margins.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import LineString, MultiLineString

from . import assignment as asg
from .access_opt import build_reduced_miqp, solve_miqp
from .config import FleetSpec, PlannerConfig
from .errors import InfeasibleError
from .fieldmap import FieldMap
from .geometry import PolygonWithHoles
from .partition import Partition, partition_with_feasibility, required_subarea_count
from .routing import CarPlan, plan_car_tour, select_car_spots
from .trails import Trail, make_trail, generate_trails, path_metrics

PLAN_VERSION = 1


@dataclass
class SubareaPlan:
    """Everything one sub-area needs: trails, per-UAV routes, car spots."""

    subarea_id: int
    polygon: PolygonWithHoles
    trails: list[Trail]
    assignment: asg.TrailAssignment
    rkga_objective_sq: float
    miqp_objective_sq: float
    rkga_transition_m: float
    miqp_transition_m: float
    miqp_status: str
    miqp_nodes: int
    car_spots: tuple[int, int] | None = None


@dataclass
class MissionPlan:
    rng_seed: int
    config_hash: str
    fleet: FleetSpec
    partitions: list[Partition]
    subareas: list[SubareaPlan]
    car_plan: CarPlan | None
    metrics: dict
    warnings: list[str] = field(default_factory=list)
    version: int = PLAN_VERSION

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        def poly_dict(p: PolygonWithHoles):
            return {
                "outer": p.outer.tolist(),
                "holes": [h.tolist() for h in p.holes],
            }

        def trail_dict(t: Trail):
            return {
                "ring": t.ring.tolist(),
                "vertex_keys": t.vertex_keys.tolist(),
                "perimeter": t.perimeter,
                "subarea_id": t.subarea_id,
                "trail_id": t.trail_id,
            }

        def sub_dict(s: SubareaPlan):
            return {
                "subarea_id": s.subarea_id,
                "polygon": poly_dict(s.polygon),
                "trails": [trail_dict(t) for t in s.trails],
                "routes": s.assignment.routes,
                "access_points": s.assignment.access_points.tolist(),
                "route_lengths": s.assignment.route_lengths,
                "battery_loads": s.assignment.battery_loads,
                "transition_lengths": s.assignment.transition_lengths,
                "rkga_objective_sq": s.rkga_objective_sq,
                "miqp_objective_sq": s.miqp_objective_sq,
                "rkga_transition_m": s.rkga_transition_m,
                "miqp_transition_m": s.miqp_transition_m,
                "miqp_status": s.miqp_status,
                "miqp_nodes": s.miqp_nodes,
                "car_spots": list(s.car_spots) if s.car_spots else None,
            }

        car = None
        if self.car_plan is not None:
            car = {
                "spots": [list(s) for s in self.car_plan.spots],
                "visit_order": self.car_plan.visit_order,
                "legs": [leg.tolist() for leg in self.car_plan.legs],
                "total_distance": self.car_plan.total_distance,
                "within_legs": [leg.tolist() for leg in self.car_plan.within_legs],
                "within_distance": self.car_plan.within_distance,
            }
        return {
            "version": self.version,
            "provenance": {"rng_seed": self.rng_seed, "config_hash": self.config_hash},
            "fleet": {
                "k": self.fleet.k,
                "endurance_s": self.fleet.endurance_s,
                "cruise_speed_mps": self.fleet.cruise_speed_mps,
                "coverage_width_m": self.fleet.coverage_width_m,
                "comm_radius_m": self.fleet.comm_radius_m,
            },
            "partitions": [
                {
                    "seeds": p.seeds.tolist(),
                    "fitness": p.fitness,
                    "cells": [poly_dict(c) for c in p.cells],
                    "seed_of_cell": p.seed_of_cell,
                }
                for p in self.partitions
            ],
            "subareas": [sub_dict(s) for s in self.subareas],
            "car_plan": car,
            "metrics": self.metrics,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "MissionPlan":
        fleet = FleetSpec(**data["fleet"])
        partitions = [
            Partition(
                cells=[PolygonWithHoles(np.asarray(c["outer"]), [np.asarray(h) for h in c["holes"]]) for c in p["cells"]],
                seed_of_cell=list(p["seed_of_cell"]),
                seeds=np.asarray(p["seeds"]),
                fitness=p["fitness"],
            )
            for p in data["partitions"]
        ]
        subareas = []
        for s in data["subareas"]:
            poly = PolygonWithHoles(np.asarray(s["polygon"]["outer"]), [np.asarray(h) for h in s["polygon"]["holes"]])
            trails = [
                Trail(
                    ring=np.asarray(t["ring"]),
                    edges=make_trail(np.asarray(t["ring"]), t["subarea_id"], t["trail_id"]).edges,
                    perimeter=t["perimeter"],
                    vertex_keys=np.asarray(t["vertex_keys"]),
                    subarea_id=t["subarea_id"],
                    trail_id=t["trail_id"],
                )
                for t in s["trails"]
            ]
            assignment = asg.TrailAssignment(
                routes=[list(r) for r in s["routes"]],
                access_points=np.asarray(s["access_points"]),
                route_lengths=list(s["route_lengths"]),
                longest_tour=max(s["route_lengths"]) if s["route_lengths"] else 0.0,
                battery_loads=list(s["battery_loads"]),
                transition_lengths=list(s["transition_lengths"]),
            )
            subareas.append(
                SubareaPlan(
                    subarea_id=s["subarea_id"],
                    polygon=poly,
                    trails=trails,
                    assignment=assignment,
                    rkga_objective_sq=s["rkga_objective_sq"],
                    miqp_objective_sq=s["miqp_objective_sq"],
                    rkga_transition_m=s["rkga_transition_m"],
                    miqp_transition_m=s["miqp_transition_m"],
                    miqp_status=s["miqp_status"],
                    miqp_nodes=s["miqp_nodes"],
                    car_spots=tuple(s["car_spots"]) if s["car_spots"] else None,
                )
            )
        car = None
        if data.get("car_plan"):
            c = data["car_plan"]
            car = CarPlan(
                spots=[tuple(x) for x in c["spots"]],
                visit_order=list(c["visit_order"]),
                legs=[np.asarray(l) for l in c["legs"]],
                total_distance=c["total_distance"],
                within_legs=[np.asarray(l) for l in c["within_legs"]],
                within_distance=c["within_distance"],
            )
        return cls(
            rng_seed=data["provenance"]["rng_seed"],
            config_hash=data["provenance"]["config_hash"],
            fleet=fleet,
            partitions=partitions,
            subareas=subareas,
            car_plan=car,
            metrics=data["metrics"],
            warnings=list(data.get("warnings", [])),
            version=data["version"],
        )

    @classmethod
    def from_json(cls, text: str) -> "MissionPlan":
        return cls.from_dict(json.loads(text))


def _derive_seed(*parts) -> int:
    entropy = tuple(abs(hash(p)) % (2**32) if isinstance(p, str) else int(p) for p in parts)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _update_assignment_points(a: asg.TrailAssignment, points: np.ndarray, costs) -> asg.TrailAssignment:
    """Same routes, new access points; recompute transition bookkeeping."""
    pts = np.asarray(points, dtype=float)
    trans, lengths, loads = [], [], []
    for route in a.routes:
        t = sum(float(np.linalg.norm(pts[route[i + 1]] - pts[route[i]])) for i in range(len(route) - 1))
        load = float(sum(costs[i] for i in route))
        trans.append(t)
        loads.append(load)
        lengths.append(load + t)
    return asg.TrailAssignment(
        routes=[list(r) for r in a.routes],
        access_points=pts,
        route_lengths=lengths,
        longest_tour=max(lengths) if lengths else 0.0,
        battery_loads=loads,
        transition_lengths=trans,
        depot=a.depot,
    )


def _plan_subarea(cell: PolygonWithHoles, subarea_id: int, fleet: FleetSpec, cfg: PlannerConfig, seed: int) -> SubareaPlan:
    trails = generate_trails(cell, fleet.coverage_width_m, subarea_id=subarea_id)
    a = asg.rkga_run(trails, fleet.k, fleet.battery_distance_m, cfg.rkga, seed)
    prob = build_reduced_miqp(a, trails)
    rkga_sq = prob.objective_value(a.access_points)
    rkga_lin = prob.transition_length(a.access_points)
    sol = solve_miqp(prob, incumbent=a.access_points, budget=cfg.miqp)
    if sol.objective > rkga_sq + 1e-6:
        raise AssertionError("access-point optimisation must not worsen the incumbent")
    costs = [t.perimeter for t in trails]
    improved = _update_assignment_points(a, sol.points, costs)
    return SubareaPlan(
        subarea_id=subarea_id,
        polygon=cell,
        trails=trails,
        assignment=improved,
        rkga_objective_sq=rkga_sq,
        miqp_objective_sq=sol.objective,
        rkga_transition_m=rkga_lin,
        miqp_transition_m=prob.transition_length(sol.points),
        miqp_status=sol.status,
        miqp_nodes=sol.node_count,
    )


def _plan_piece(piece: PolygonWithHoles, piece_idx: int, fleet: FleetSpec, cfg: PlannerConfig,
                rng_seed: int, id_start: int):
    """Partition one farmland piece and plan its sub-areas.

    Battery infeasibility during assignment re-partitions with one more
    sub-area (the refinement loop), within the 4x cap.
    """
    n0 = required_subarea_count(piece.area, fleet.k, fleet.area_per_uav_m2)
    part_seed = _derive_seed(rng_seed, "partition", piece_idx)
    attempt_n = None
    while True:
        part = partition_with_feasibility(
            piece, fleet, cfg.weights, cfg.partition_ga, part_seed,
            n_override=attempt_n, battery_margin=cfg.battery_margin,
        )
        try:
            subplans = []
            for ci, cell in enumerate(part.cells):
                sub_seed = _derive_seed(rng_seed, "rkga", piece_idx, ci)
                subplans.append(_plan_subarea(cell, id_start + ci, fleet, cfg, sub_seed))
            return part, subplans
        except InfeasibleError as exc:
            if exc.constraint != "battery":
                raise
            attempt_n = (attempt_n or part.n_seeds) + 1
            if attempt_n > 4 * n0:
                raise InfeasibleError(
                    f"assignment stays battery-infeasible up to {4 * n0} sub-areas: {exc}",
                    stage="assignment",
                    constraint="battery",
                ) from exc


def plan_mission(fieldmap: FieldMap, fleet: FleetSpec, cfg: PlannerConfig | None = None,
                 rng_seed: int = 0, timings: dict | None = None) -> MissionPlan:
    """Run partition -> trails -> assignment -> access optimisation -> routing.

    Deterministic for a fixed rng_seed; any stage infeasibility raises
    InfeasibleError carrying the stage name and violated constraint.
    """
    cfg = cfg or PlannerConfig()
    warnings = list(fieldmap.warnings)
    tick = time.perf_counter()

    partitions, subareas = [], []
    for piece_idx, piece in enumerate(fieldmap.farmland):
        part, subplans = _plan_piece(piece, piece_idx, fleet, cfg, rng_seed, len(subareas))
        partitions.append(part)
        subareas.extend(subplans)
    t_plan = time.perf_counter() - tick

    tick = time.perf_counter()
    car_plan = None
    if fieldmap.roads is not None and fieldmap.roads.n_nodes > 0:
        spots = []
        for sub in subareas:
            start, end = select_car_spots(sub.assignment, fieldmap.roads, fleet.comm_radius_m)
            sub.car_spots = (start, end)
            spots.append((start, end))
        car_plan = plan_car_tour(spots, fieldmap.roads)
    else:
        warnings.append("no road graph: car routing skipped")
    t_route = time.perf_counter() - tick

    metrics = _compute_metrics(subareas, car_plan, fieldmap, fleet)
    if timings is not None:
        timings.update({"plan_subareas_s": t_plan, "routing_s": t_route})
    return MissionPlan(
        rng_seed=rng_seed,
        config_hash=cfg.hash(),
        fleet=fleet,
        partitions=partitions,
        subareas=subareas,
        car_plan=car_plan,
        metrics=metrics,
        warnings=warnings,
    )


def _uav_mission_distances(sub: SubareaPlan, roads) -> list[float]:
    """Per-UAV distance in one sub-area: trails + transitions + car legs."""
    out = []
    for k, route in enumerate(sub.assignment.routes):
        d = sub.assignment.route_lengths[k]
        if route and sub.car_spots is not None and roads is not None:
            start_xy = roads.nodes[sub.car_spots[0]]
            end_xy = roads.nodes[sub.car_spots[1]]
            d += float(np.linalg.norm(sub.assignment.access_points[route[0]] - start_xy))
            d += float(np.linalg.norm(sub.assignment.access_points[route[-1]] - end_xy))
        out.append(d)
    return out


def _compute_metrics(subareas, car_plan, fieldmap, fleet: FleetSpec) -> dict:
    per_sub = []
    for sub in subareas:
        dists = _uav_mission_distances(sub, fieldmap.roads)
        times = [d / fleet.cruise_speed_mps for d in dists]
        turn_counts = [path_metrics(t).turn_count for t in sub.trails]
        per_sub.append({
            "subarea_id": sub.subarea_id,
            "n_trails": len(sub.trails),
            "trail_length_m": sum(t.perimeter for t in sub.trails),
            "uav_distances_m": dists,
            "uav_flight_times_s": times,
            "flight_time_max_s": max(times),
            "flight_time_mean_s": sum(times) / len(times),
            "battery_loads_m": sub.assignment.battery_loads,
            "turn_count_total": int(sum(turn_counts)),
            "transition_before_m": sub.rkga_transition_m,
            "transition_after_m": sub.miqp_transition_m,
            "objective_sq_before": sub.rkga_objective_sq,
            "objective_sq_after": sub.miqp_objective_sq,
        })
    return {
        "field_area_m2": fieldmap.total_area,
        "n_subareas": len(subareas),
        "per_subarea": per_sub,
        "total_trail_length_m": sum(s["trail_length_m"] for s in per_sub),
        "max_flight_time_s": max(s["flight_time_max_s"] for s in per_sub) if per_sub else 0.0,
        "car_distance_m": car_plan.total_distance if car_plan else 0.0,
        "car_within_distance_m": car_plan.within_distance if car_plan else 0.0,
    }


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float
    detail: str


@dataclass
class ValidationReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"[{flag}] {c.name}: margin {c.worst_margin:+.3e} ({c.detail})")
        return "\n".join(lines)


def validate_mission(plan: MissionPlan, fieldmap: FieldMap, fleet: FleetSpec,
                     n_samples: int = 10000, sample_seed: int = 0) -> ValidationReport:
    """Independent constraint checks; never raises, reports margins."""
    checks: list[CheckResult] = []
    rng = np.random.default_rng(sample_seed)
    w = fleet.coverage_width_m

    # coverage: sampled farmland points within w/2 of some trail in their sub-area
    all_lines = MultiLineString(
        [np.vstack([t.ring, t.ring[:1]]).tolist() for sub in plan.subareas for t in sub.trails]
    )
    areas = np.array([p.area for p in fieldmap.farmland])
    counts = np.maximum(1, np.round(n_samples * areas / areas.sum()).astype(int))
    worst = 0.0
    worst_pt = (0.0, 0.0)
    for piece, cnt in zip(fieldmap.farmland, counts):
        pts = piece.sample_interior(rng, int(cnt))
        dists = shapely.distance(all_lines, shapely.points(pts))
        i = int(np.argmax(dists))
        if dists[i] > worst:
            worst = float(dists[i])
            worst_pt = (float(pts[i, 0]), float(pts[i, 1]))
    limit = w / 2 + 1e-6
    checks.append(CheckResult(
        name="coverage",
        passed=worst <= limit,
        worst_margin=limit - worst,
        detail=f"max sample distance {worst:.3f} m at {worst_pt}, limit {limit:.3f} m",
    ))

    # obstacle avoidance: no trail enters an obstacle interior
    violation_len = 0.0
    for sub in plan.subareas:
        for t in sub.trails:
            line = LineString(np.vstack([t.ring, t.ring[:1]]))
            for obs in fieldmap.obstacles:
                inter = line.intersection(obs.to_shapely().buffer(-1e-9))
                if not inter.is_empty:
                    violation_len += getattr(inter, "length", 0.0) or 1e-9
    checks.append(CheckResult(
        name="obstacle_avoidance",
        passed=violation_len == 0.0,
        worst_margin=-violation_len,
        detail=f"{violation_len:.3e} m of trail inside obstacles",
    ))

    # each trail on exactly one route
    dup_ok = True
    for sub in plan.subareas:
        seen = sorted(t for r in sub.assignment.routes for t in r)
        if seen != list(range(len(sub.trails))):
            dup_ok = False
    checks.append(CheckResult(
        name="trail_partition",
        passed=dup_ok,
        worst_margin=0.0 if dup_ok else -1.0,
        detail="every trail assigned exactly once" if dup_ok else "route multiset mismatch",
    ))

    # battery: per-UAV sum of trail perimeters within budget
    budget = fleet.battery_distance_m
    worst_load = max(
        (max(sub.assignment.battery_loads) for sub in plan.subareas if sub.assignment.battery_loads),
        default=0.0,
    )
    checks.append(CheckResult(
        name="battery",
        passed=worst_load <= budget * (1 + 1e-9) + 1e-6,
        worst_margin=budget - worst_load,
        detail=f"max per-UAV trail load {worst_load:.1f} m vs budget {budget:.1f} m",
    ))

    # communication radius from assigned car spots to every access point
    worst_comm = 0.0
    if fieldmap.roads is not None:
        for sub in plan.subareas:
            if sub.car_spots is None:
                continue
            for node in sub.car_spots:
                xy = fieldmap.roads.nodes[node]
                d = np.linalg.norm(sub.assignment.access_points - xy, axis=1).max()
                worst_comm = max(worst_comm, float(d))
    checks.append(CheckResult(
        name="comm_radius",
        passed=worst_comm <= fleet.comm_radius_m + 1e-6,
        worst_margin=fleet.comm_radius_m - worst_comm,
        detail=f"max spot-to-access-point distance {worst_comm:.1f} m vs {fleet.comm_radius_m:.1f} m",
    ))

    # metrics self-consistency: per-UAV distances match recomputation
    worst_dev = 0.0
    for sub, m in zip(plan.subareas, plan.metrics["per_subarea"]):
        recomputed = _uav_mission_distances(sub, fieldmap.roads)
        dev = max(abs(a - b) for a, b in zip(recomputed, m["uav_distances_m"]))
        worst_dev = max(worst_dev, dev)
    checks.append(CheckResult(
        name="metrics_consistency",
        passed=worst_dev <= 1e-6,
        worst_margin=1e-6 - worst_dev,
        detail=f"max reported-vs-recomputed deviation {worst_dev:.2e} m",
    ))

    # access-point optimisation may only improve the squared objective
    worst_gap = 0.0
    for sub in plan.subareas:
        worst_gap = max(worst_gap, sub.miqp_objective_sq - sub.rkga_objective_sq)
    checks.append(CheckResult(
        name="miqp_no_worse",
        passed=worst_gap <= 1e-6,
        worst_margin=-worst_gap,
        detail="squared transition objective never increased",
    ))
    return ValidationReport(checks=checks)
