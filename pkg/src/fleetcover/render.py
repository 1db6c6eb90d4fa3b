"""Deterministic SVG rendering of mission plans.

Layers (selectable): field cells, partition colouring, trails, per-UAV
assignment with transition lines and access points, car spots and route.
Output bytes depend only on the plan contents.
"""

from __future__ import annotations

import numpy as np

from .fieldmap import FieldMap
from .pipeline import MissionPlan

PALETTE = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0",
    "#f032e6", "#bcf60c", "#008080", "#9a6324", "#800000", "#808000",
]

ALL_STAGES = ("field", "partition", "trails", "assignment", "car")


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _path(ring: np.ndarray, close: bool = True) -> str:
    parts = [f"M {_fmt(ring[0, 0])} {_fmt(ring[0, 1])}"]
    parts += [f"L {_fmt(x)} {_fmt(y)}" for x, y in ring[1:]]
    if close:
        parts.append("Z")
    return " ".join(parts)


def _poly_path(poly) -> str:
    d = _path(poly.outer)
    for hole in poly.holes:
        d += " " + _path(hole)
    return d


def render_svg(plan: MissionPlan, stages=ALL_STAGES, fieldmap: FieldMap | None = None) -> str:
    """Layered SVG document for the selected stages."""
    stages = tuple(stages)
    cells = [c for p in plan.partitions for c in p.cells]
    pts = np.vstack([c.outer for c in cells]) if cells else np.zeros((1, 2))
    x0, y0 = pts.min(axis=0) - 20
    x1, y1 = pts.max(axis=0) + 20
    wpx, hpx = x1 - x0, y1 - y0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(x0)} {_fmt(-y1)} {_fmt(wpx)} {_fmt(hpx)}" '
        f'width="900" height="{_fmt(900 * hpx / max(wpx, 1e-9))}">',
        '<g transform="scale(1,-1)">',
    ]

    if "field" in stages:
        out.append('<g id="field">')
        for cell in cells:
            out.append(
                f'<path d="{_poly_path(cell)}" fill="#f2f7ee" stroke="#555555" '
                'stroke-width="1" fill-rule="evenodd"/>'
            )
        out.append("</g>")

    if "partition" in stages:
        out.append('<g id="partition" fill-opacity="0.35">')
        for i, sub in enumerate(plan.subareas):
            color = PALETTE[i % len(PALETTE)]
            out.append(
                f'<path d="{_poly_path(sub.polygon)}" fill="{color}" stroke="{color}" '
                'stroke-width="1.5" fill-rule="evenodd"/>'
            )
        out.append("</g>")

    if fieldmap is not None and fieldmap.roads is not None:
        out.append('<g id="roads" stroke="#999999" stroke-width="2" fill="none">')
        seen = set()
        for i, nbrs in enumerate(fieldmap.roads.adjacency):
            for j, _, poly in nbrs:
                if (j, i) in seen or (i, j) in seen:
                    continue
                seen.add((i, j))
                out.append(f'<path d="{_path(np.asarray(poly), close=False)}"/>')
        out.append("</g>")

    if "trails" in stages:
        out.append('<g id="trails" fill="none" stroke-width="0.8">')
        for sub in plan.subareas:
            uav_of_trail = {}
            for k, route in enumerate(sub.assignment.routes):
                for t in route:
                    uav_of_trail[t] = k
            for t in sub.trails:
                color = (
                    PALETTE[uav_of_trail.get(t.trail_id, 0) % len(PALETTE)]
                    if "assignment" in stages
                    else "#2a6f2a"
                )
                ring = np.vstack([t.ring, t.ring[:1]])
                out.append(f'<path d="{_path(ring, close=False)}" stroke="{color}"/>')
        out.append("</g>")

    if "assignment" in stages:
        out.append('<g id="assignment">')
        for sub in plan.subareas:
            ap = sub.assignment.access_points
            for k, route in enumerate(sub.assignment.routes):
                color = PALETTE[k % len(PALETTE)]
                for a, b in zip(route[:-1], route[1:]):
                    out.append(
                        f'<line x1="{_fmt(ap[a, 0])}" y1="{_fmt(ap[a, 1])}" '
                        f'x2="{_fmt(ap[b, 0])}" y2="{_fmt(ap[b, 1])}" '
                        f'stroke="{color}" stroke-width="1.2" stroke-dasharray="4 2"/>'
                    )
                for t in route:
                    out.append(
                        f'<circle cx="{_fmt(ap[t, 0])}" cy="{_fmt(ap[t, 1])}" r="2" fill="{color}"/>'
                    )
        out.append("</g>")

    if "car" in stages and plan.car_plan is not None and fieldmap is not None and fieldmap.roads is not None:
        out.append('<g id="car">')
        for leg in plan.car_plan.legs:
            out.append(
                f'<path d="{_path(np.asarray(leg), close=False)}" fill="none" '
                'stroke="#1144cc" stroke-width="2.5"/>'
            )
        nodes = fieldmap.roads.nodes
        for start, end in plan.car_plan.spots:
            out.append(f'<circle cx="{_fmt(nodes[start, 0])}" cy="{_fmt(nodes[start, 1])}" r="4" fill="#cc2222"/>')
            out.append(f'<circle cx="{_fmt(nodes[end, 0])}" cy="{_fmt(nodes[end, 1])}" r="4" fill="#22aa22"/>')
        out.append("</g>")

    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
