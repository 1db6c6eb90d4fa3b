"""Coverage trail generation inside a sub-area.

Closed trails are the boundaries of repeated inward mitered offsets at the
UAV coverage width, starting half a width in. Mitered rings alone leave small
uncovered pockets at convex corners (the ring corner sits sqrt(2)/2 x w away
from the field corner for a right angle), so a gap-fill pass appends short
out-and-back "dart" trails -- degenerate two-vertex loops -- until a sampling
oracle cannot find a point farther than w/2 from every trail.

A boustrophedon (zig-zag) generator and path metrics are included for
comparing the two path families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import LineString, MultiLineString, Point as ShapelyPoint, Polygon as ShapelyPolygon

from .errors import InfeasibleError, InvalidGeometryError
from .geometry import (
    PolygonWithHoles,
    SegmentHalfspaces,
    mitered_offset,
    segment_to_halfspaces,
    signed_ring_area,
)

# ignore uncovered slivers below this area; a uniform sampler cannot hit them
_GAP_AREA_EPS = 1e-6
_MAX_GAP_ROUNDS = 60


@dataclass
class Trail:
    """Closed polygonal loop assigned to a single UAV.

    ``ring`` holds the vertices once (no closing duplicate); traversal wraps.
    ``vertex_keys`` are the normalised arc-length positions of the vertices,
    starting at 0 for the lexicographically smallest vertex. Two-vertex rings
    are degenerate out-and-back loops whose perimeter counts the segment twice.
    """

    ring: np.ndarray
    edges: list[SegmentHalfspaces]
    perimeter: float
    vertex_keys: np.ndarray
    subarea_id: int = 0
    trail_id: int = 0

    @property
    def n_vertices(self) -> int:
        return len(self.ring)

    @property
    def is_degenerate(self) -> bool:
        return len(self.ring) == 2

    def as_linestring(self) -> LineString:
        return LineString(np.vstack([self.ring, self.ring[:1]]))

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.ring.min(axis=0), self.ring.max(axis=0)


@dataclass
class PathMetrics:
    length: float
    turn_count: int
    total_turning_angle: float


def _dedupe_ring(ring: np.ndarray) -> np.ndarray:
    ring = np.asarray(ring, dtype=float)
    if len(ring) > 1 and np.allclose(ring[0], ring[-1]):
        ring = ring[:-1]
    keep = [0]
    for i in range(1, len(ring)):
        if np.linalg.norm(ring[i] - ring[keep[-1]]) > 1e-9:
            keep.append(i)
    ring = ring[keep]
    if len(ring) > 2 and np.linalg.norm(ring[0] - ring[-1]) <= 1e-9:
        ring = ring[:-1]
    return ring


def make_trail(ring, subarea_id=0, trail_id=0, around_hole=False) -> Trail:
    """Normalise a vertex ring into a Trail (orientation, start vertex, keys)."""
    ring = _dedupe_ring(ring)
    if len(ring) < 2:
        raise InvalidGeometryError("trail ring needs at least 2 distinct vertices")
    if len(ring) > 2:
        ccw = signed_ring_area(ring) > 0
        if around_hole == ccw:  # outer rings CCW, rings around holes CW
            ring = ring[::-1].copy()
    start = int(np.lexsort((ring[:, 1], ring[:, 0]))[0])
    ring = np.roll(ring, -start, axis=0)

    nxt = np.roll(ring, -1, axis=0)
    seg_len = np.linalg.norm(nxt - ring, axis=1)
    perimeter = float(seg_len.sum())
    keys = np.concatenate([[0.0], np.cumsum(seg_len)[:-1]]) / perimeter
    lb, ub = ring.min(axis=0), ring.max(axis=0)
    edges = [segment_to_halfspaces(ring[i], nxt[i], (lb, ub)) for i in range(len(ring))]
    return Trail(
        ring=ring,
        edges=edges,
        perimeter=perimeter,
        vertex_keys=keys,
        subarea_id=subarea_id,
        trail_id=trail_id,
    )


def _rect_medial(rect_geom) -> LineString | None:
    """Long-axis midline of a minimum rotated rectangle (or the line itself)."""
    if rect_geom.is_empty:
        return None
    if isinstance(rect_geom, ShapelyPoint):
        x, y = rect_geom.x, rect_geom.y
        return LineString([(x - 5e-4, y), (x + 5e-4, y)])
    if isinstance(rect_geom, LineString):
        return rect_geom
    c = np.asarray(rect_geom.exterior.coords)[:4]
    e01 = np.linalg.norm(c[1] - c[0])
    e12 = np.linalg.norm(c[2] - c[1])
    if e01 >= e12:
        a, b = (c[3] + c[0]) / 2, (c[1] + c[2]) / 2
    else:
        a, b = (c[0] + c[1]) / 2, (c[2] + c[3]) / 2
    if np.linalg.norm(b - a) < 1e-9:
        mid = (a + b) / 2
        return LineString([mid - (5e-4, 0.0), mid + (5e-4, 0.0)])
    return LineString([a, b])


def _line_pieces(geom) -> list[LineString]:
    if geom.is_empty:
        return []
    if isinstance(geom, LineString):
        return [geom]
    if isinstance(geom, MultiLineString):
        return list(geom.geoms)
    return [g for g in getattr(geom, "geoms", []) if isinstance(g, LineString)]


def coverage_union(trails: list[Trail], w: float, slack: float = 1e-7):
    """Region within w/2 (+slack) of any trail polyline."""
    return shapely.union_all([t.as_linestring().buffer(w / 2 + slack) for t in trails])


def uncovered_regions(subarea: PolygonWithHoles, trails: list[Trail], w: float) -> list[ShapelyPolygon]:
    gap = subarea.to_shapely().difference(coverage_union(trails, w))
    if gap.is_empty:
        return []
    parts = [gap] if isinstance(gap, ShapelyPolygon) else [
        g for g in getattr(gap, "geoms", []) if isinstance(g, ShapelyPolygon)
    ]
    parts = [p for p in parts if p.area > _GAP_AREA_EPS]
    parts.sort(key=lambda p: (-p.area, p.bounds[0], p.bounds[1]))
    return parts


def _darts_for_gap(gap: ShapelyPolygon, subarea_shp) -> list[np.ndarray]:
    """Two-vertex dart segments covering one uncovered pocket.

    The dart is the long-axis midline of the pocket hull's minimum rotated
    rectangle, kept inside the hull (so it cannot touch the offset rings,
    which are at least w/2 away from the pocket) and clipped to the sub-area
    so it never enters an obstacle.
    """
    hull = gap.convex_hull
    medial = _rect_medial(shapely.minimum_rotated_rectangle(hull))
    if medial is None:
        return []
    clipped = medial.intersection(hull.buffer(1e-9)).intersection(subarea_shp)
    pieces = _line_pieces(clipped)
    if not pieces:
        rep = gap.representative_point()
        fallback = LineString([(rep.x - 5e-4, rep.y), (rep.x + 5e-4, rep.y)]).intersection(subarea_shp)
        pieces = _line_pieces(fallback)
    out = []
    for piece in pieces:
        coords = np.asarray(piece.coords)
        if np.linalg.norm(coords[-1] - coords[0]) > 1e-8:
            out.append(np.vstack([coords[0], coords[-1]]))
    return out


def _close_coverage_gaps(subarea: PolygonWithHoles, rings, w: float):
    """Cover the corner pockets that mitered rings leave with dart loops.

    Rings spaced w apart leave small uncovered pockets at convex corners (the
    deepest pocket point sits (w/2)/sin(theta/2) from both ring corners).
    Each pocket gets a degenerate two-vertex "dart" trail along the long axis
    of its hull's minimum rotated rectangle, clipped inside the hull so it
    cannot touch the rings (which are at least w/2 away from any pocket).
    """
    subarea_shp = subarea.to_shapely()
    darts: list[np.ndarray] = []

    for _ in range(_MAX_GAP_ROUNDS):
        parts_src = [np.vstack([r, r[:1]]) for r, _ in rings] + darts
        lines = shapely.MultiLineString([p.tolist() for p in parts_src])
        gap = subarea_shp.difference(lines.buffer(w / 2 + 1e-7))
        parts = [gap] if isinstance(gap, ShapelyPolygon) else [
            g for g in getattr(gap, "geoms", []) if isinstance(g, ShapelyPolygon)
        ]
        parts = [p for p in parts if p.area > _GAP_AREA_EPS]
        if not parts:
            return rings, darts
        parts.sort(key=lambda p: (-p.area, p.bounds[0], p.bounds[1]))
        progressed = False
        for pocket in parts:
            for seg in _darts_for_gap(pocket, subarea_shp):
                darts.append(seg)
                progressed = True
        if not progressed:
            return rings, darts
    raise InvalidGeometryError("gap-fill did not converge; sub-area geometry is pathological")


def generate_trails(
    subarea: PolygonWithHoles,
    w: float,
    subarea_id: int = 0,
    cover_gaps: bool = True,
) -> list[Trail]:
    """Mitered-offset trails at depths w/2, w/2 + w, ... with corner gap-fill.

    Every point of the sub-area ends up within w/2 of some trail; trails never
    enter obstacle holes. Raises InfeasibleError when the sub-area is narrower
    than the coverage width.
    """
    if w <= 0:
        raise InvalidGeometryError(f"coverage width must be positive, got {w}")
    probe = subarea.to_shapely().buffer(-(w / 2) * (1 - 1e-4), join_style="mitre", mitre_limit=4.0)
    if probe.is_empty:
        raise InfeasibleError(
            f"sub-area narrower than coverage width {w}",
            stage="trails",
            constraint="coverage width",
        )

    rings: list[tuple[np.ndarray, bool]] = []  # (vertex ring, is hole ring)
    depth = w / 2
    while True:
        layer = mitered_offset(subarea, depth)
        if not layer:
            break
        for poly in layer:
            rings.append((_dedupe_ring(poly.outer), False))
            for hole in poly.holes:
                rings.append((_dedupe_ring(hole), True))
        depth += w

    darts: list[np.ndarray] = []
    if cover_gaps:
        rings, darts = _close_coverage_gaps(subarea, rings, w)

    trails: list[Trail] = []
    for ring, is_hole in rings:
        trails.append(make_trail(ring, subarea_id, len(trails), around_hole=is_hole))
    for seg in darts:
        trails.append(make_trail(seg, subarea_id, len(trails)))

    if not trails:
        raise InfeasibleError(
            f"sub-area narrower than coverage width {w}",
            stage="trails",
            constraint="coverage width",
        )
    return trails


def generate_zigzag(subarea: PolygonWithHoles, w: float, sweep_direction: float = 0.0) -> np.ndarray:
    """Boustrophedon polyline with passes spaced w apart, clipped to the area.

    ``sweep_direction`` is the pass heading in radians (0 = passes parallel
    to the x axis). Pass segments inside the area are linked in lawnmower
    order; connectors are straight.
    """
    if w <= 0:
        raise InvalidGeometryError(f"coverage width must be positive, got {w}")
    c, s = math.cos(-sweep_direction), math.sin(-sweep_direction)
    rot = np.array([[c, -s], [s, c]])
    shp = shapely.transform(subarea.to_shapely(), lambda xy: xy @ rot.T)
    x0, y0, x1, y1 = shp.bounds
    height = y1 - y0
    n_pass = max(1, math.ceil(height / w - 1e-12))
    ys = [y0 + w / 2 + k * w for k in range(n_pass)]
    if n_pass == 1:
        ys = [(y0 + y1) / 2]
    else:
        ys[-1] = min(ys[-1], y1 - w / 2)

    vertices: list[np.ndarray] = []
    for k, y in enumerate(ys):
        cut = LineString([(x0 - 1.0, y), (x1 + 1.0, y)]).intersection(shp)
        segs = []
        for piece in _line_pieces(cut):
            coords = np.asarray(piece.coords)
            lo, hi = coords[:, 0].min(), coords[:, 0].max()
            if hi - lo > 1e-9:
                segs.append((lo, hi))
        segs.sort()
        if k % 2 == 1:
            segs = [(hi, lo) for lo, hi in reversed(segs)]
        for xa, xb in segs:
            vertices.append(np.array([xa, y]))
            vertices.append(np.array([xb, y]))
    if len(vertices) < 2:
        raise InfeasibleError(
            f"sub-area narrower than coverage width {w}",
            stage="trails",
            constraint="coverage width",
        )
    inv = np.array([[c, s], [-s, c]])
    return np.vstack(vertices) @ inv.T


def path_metrics(path, closed: bool | None = None) -> PathMetrics:
    """Length, count of turns (exterior angle > 1e-6 rad) and total turning."""
    if isinstance(path, Trail):
        pts = path.ring
        closed = True
    else:
        pts = np.asarray(path, dtype=float)
        closed = bool(closed)
    if len(pts) < 2:
        raise InvalidGeometryError("path needs at least 2 vertices")

    if closed:
        segs = np.roll(pts, -1, axis=0) - pts
    else:
        segs = np.diff(pts, axis=0)
    lengths = np.linalg.norm(segs, axis=1)
    length = float(lengths.sum())

    dirs = segs[lengths > 1e-12]
    if closed and len(dirs) > 0:
        incoming = np.roll(dirs, 1, axis=0)
        outgoing = dirs
    else:
        incoming, outgoing = dirs[:-1], dirs[1:]
    cross = incoming[:, 0] * outgoing[:, 1] - incoming[:, 1] * outgoing[:, 0]
    dot = np.sum(incoming * outgoing, axis=1)
    angles = np.abs(np.arctan2(cross, dot))
    turns = int(np.count_nonzero(angles > 1e-6))
    return PathMetrics(length=length, turn_count=turns, total_turning_angle=float(angles.sum()))
