"""Command-line interface.

Verbs: plan (full pipeline), partition / trails / assign / route (stage-wise,
each consuming the previous stage's plan document), validate, render.
Exit codes: 0 success, 2 infeasible, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import assignment as asg
from .access_opt import build_reduced_miqp, solve_miqp
from .config import ConfigError, FleetSpec, PlannerConfig, load_config
from .errors import InfeasibleError, InvalidGeometryError, MapLoadError
from .fieldmap import load_map
from .geometry import PolygonWithHoles
from .pipeline import (
    MissionPlan,
    SubareaPlan,
    _compute_metrics,
    _plan_subarea,
    _derive_seed,
    plan_mission,
    validate_mission,
)
from .partition import partition_with_feasibility
from .render import ALL_STAGES, render_svg
from .routing import plan_car_tour, select_car_spots

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fleetcover", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_map=True, needs_out=True):
        if needs_map:
            sp.add_argument("--map", required=True, help="GeoJSON map file")
        sp.add_argument("--config", help="JSON planner config")
        sp.add_argument("--seed", type=int, default=0, help="master RNG seed")
        if needs_out:
            sp.add_argument("--out", required=True, help="output file")

    common(sub.add_parser("plan", help="run the full pipeline"))
    common(sub.add_parser("partition", help="partition the field only"))

    sp = sub.add_parser("trails", help="generate trails for a partitioned plan")
    common(sp, needs_map=False)
    sp.add_argument("--plan", required=True, help="plan document from 'partition'")

    sp = sub.add_parser("assign", help="assign trails and optimise access points")
    common(sp, needs_map=False)
    sp.add_argument("--plan", required=True, help="plan document from 'trails'")

    sp = sub.add_parser("route", help="plan the car tour")
    common(sp)
    sp.add_argument("--plan", required=True, help="plan document from 'assign'")

    sp = sub.add_parser("validate", help="validate a plan against its map")
    sp.add_argument("--map", required=True)
    sp.add_argument("--plan", required=True)
    sp.add_argument("--config", help="JSON planner config")
    sp.add_argument("--seed", type=int, default=0, help="sampling seed")

    sp = sub.add_parser("render", help="render a plan to SVG")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--map", help="optional map for road background")
    sp.add_argument("--out", required=True)
    sp.add_argument("--stages", default=",".join(ALL_STAGES),
                    help=f"comma-separated subset of {ALL_STAGES}")
    return p


def _load_cfg(path) -> PlannerConfig:
    return load_config(path) if path else PlannerConfig()


def _read_plan(path) -> dict:
    return json.loads(Path(path).read_text())


def _cmd_plan(args) -> int:
    cfg = _load_cfg(args.config)
    fm = load_map(args.map)
    timings: dict = {}
    t0 = time.perf_counter()
    plan = plan_mission(fm, cfg.fleet, cfg, rng_seed=args.seed, timings=timings)
    timings["total_s"] = time.perf_counter() - t0
    Path(args.out).write_text(plan.to_json())
    for w in plan.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"planned {len(plan.subareas)} sub-areas in {timings['total_s']:.1f} s", file=sys.stderr)
    return EXIT_OK


def _cmd_partition(args) -> int:
    cfg = _load_cfg(args.config)
    fm = load_map(args.map)
    doc = {"version": 1, "seed": args.seed, "partitions": []}
    for piece_idx, piece in enumerate(fm.farmland):
        part = partition_with_feasibility(
            piece, cfg.fleet, cfg.weights, cfg.partition_ga,
            _derive_seed(args.seed, "partition", piece_idx),
            battery_margin=cfg.battery_margin,
        )
        doc["partitions"].append({
            "seeds": part.seeds.tolist(),
            "fitness": part.fitness,
            "cells": [
                {"outer": c.outer.tolist(), "holes": [h.tolist() for h in c.holes]}
                for c in part.cells
            ],
            "seed_of_cell": part.seed_of_cell,
        })
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return EXIT_OK


def _cells_from_doc(doc) -> list[PolygonWithHoles]:
    cells = []
    for part in doc["partitions"]:
        for c in part["cells"]:
            cells.append(PolygonWithHoles(np.asarray(c["outer"]), [np.asarray(h) for h in c["holes"]]))
    return cells


def _cmd_trails(args) -> int:
    cfg = _load_cfg(args.config)
    doc = _read_plan(args.plan)
    from .trails import generate_trails

    doc["subarea_trails"] = []
    for sid, cell in enumerate(_cells_from_doc(doc)):
        trails = generate_trails(cell, cfg.fleet.coverage_width_m, subarea_id=sid)
        doc["subarea_trails"].append([
            {"ring": t.ring.tolist(), "trail_id": t.trail_id, "subarea_id": sid}
            for t in trails
        ])
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return EXIT_OK


def _cmd_assign(args) -> int:
    cfg = _load_cfg(args.config)
    doc = _read_plan(args.plan)
    seed = doc.get("seed", args.seed)
    cells = _cells_from_doc(doc)
    doc["assignments"] = []
    for sid, cell in enumerate(cells):
        sub = _plan_subarea(cell, sid, cfg.fleet, cfg, _derive_seed(seed, "rkga", 0, sid))
        doc["assignments"].append({
            "routes": sub.assignment.routes,
            "access_points": sub.assignment.access_points.tolist(),
            "route_lengths": sub.assignment.route_lengths,
            "rkga_objective_sq": sub.rkga_objective_sq,
            "miqp_objective_sq": sub.miqp_objective_sq,
            "miqp_status": sub.miqp_status,
        })
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return EXIT_OK


def _cmd_route(args) -> int:
    cfg = _load_cfg(args.config)
    fm = load_map(args.map)
    doc = _read_plan(args.plan)
    if fm.roads is None:
        print("error: map has no roads", file=sys.stderr)
        return EXIT_INFEASIBLE
    spots = []
    for a in doc["assignments"]:
        sub = argparse.Namespace(
            routes=a["routes"], access_points=np.asarray(a["access_points"])
        )
        spots.append(select_car_spots(sub, fm.roads, cfg.fleet.comm_radius_m))
    car = plan_car_tour(spots, fm.roads)
    doc["car_plan"] = {
        "spots": [list(s) for s in car.spots],
        "visit_order": car.visit_order,
        "total_distance": car.total_distance,
        "within_distance": car.within_distance,
        "legs": [leg.tolist() for leg in car.legs],
    }
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load_cfg(args.config)
    fm = load_map(args.map)
    plan = MissionPlan.from_json(Path(args.plan).read_text())
    report = validate_mission(plan, fm, plan.fleet, sample_seed=args.seed)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


def _cmd_render(args) -> int:
    plan = MissionPlan.from_json(Path(args.plan).read_text())
    fm = load_map(args.map) if args.map else None
    stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
    bad = set(stages) - set(ALL_STAGES)
    if bad:
        print(f"error: unknown stages {sorted(bad)}", file=sys.stderr)
        return EXIT_INPUT
    Path(args.out).write_text(render_svg(plan, stages=stages, fieldmap=fm))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "plan": _cmd_plan,
        "partition": _cmd_partition,
        "trails": _cmd_trails,
        "assign": _cmd_assign,
        "route": _cmd_route,
        "validate": _cmd_validate,
        "render": _cmd_render,
    }
    try:
        return handlers[args.command](args)
    except InfeasibleError as exc:
        stage = f" [{exc.stage}]" if exc.stage else ""
        print(f"infeasible{stage}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (MapLoadError, ConfigError, InvalidGeometryError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
