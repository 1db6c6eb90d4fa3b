"""Planar computational-geometry kernel.

Polygons with holes, shoelace areas, inward mitered offsetting, Voronoi
partitions clipped to a boundary, and the per-edge halfspace representation
of line segments used by the access-point optimizer.

All functions are pure; polygon boolean operations and offsetting are backed
by shapely (GEOS), Voronoi diagrams by scipy's Qhull wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import shapely
from scipy.spatial import Voronoi
from shapely.geometry import MultiPolygon, Polygon as ShapelyPolygon

from .errors import InvalidGeometryError

# Exact predicates use EXACT_TOL metres, area comparisons AREA_TOL (relative).
EXACT_TOL = 1e-9
AREA_TOL = 1e-6
# Reflex miters longer than MITRE_LIMIT x offset distance fall back to bevel.
MITRE_LIMIT = 4.0


class Point(NamedTuple):
    x: float
    y: float

    def dist(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def _as_xy(ring) -> np.ndarray:
    arr = np.asarray(ring, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidGeometryError(f"ring must be an (n, 2) coordinate array, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidGeometryError("ring contains non-finite coordinates")
    # drop an explicit closing vertex and consecutive duplicates
    if len(arr) > 1 and np.allclose(arr[0], arr[-1]):
        arr = arr[:-1]
    keep = [0]
    for i in range(1, len(arr)):
        if not np.allclose(arr[i], arr[keep[-1]], atol=1e-12):
            keep.append(i)
    return arr[keep]


def signed_ring_area(ring: np.ndarray) -> float:
    """Shoelace signed area; positive for counter-clockwise rings."""
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def ring_perimeter(ring: np.ndarray) -> float:
    return float(np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1).sum())


@dataclass
class PolygonWithHoles:
    """Simple polygon with disjoint holes.

    The outer ring is stored counter-clockwise, holes clockwise. Rings are
    validated as simple; holes must lie strictly inside the outer ring and be
    pairwise disjoint.
    """

    outer: np.ndarray
    holes: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.outer = _as_xy(self.outer)
        self.holes = [_as_xy(h) for h in self.holes]
        if len(self.outer) < 3:
            raise InvalidGeometryError("outer ring needs at least 3 vertices")
        for h in self.holes:
            if len(h) < 3:
                raise InvalidGeometryError("hole ring needs at least 3 vertices")
        if signed_ring_area(self.outer) < 0:
            self.outer = self.outer[::-1].copy()
        self.holes = [h[::-1].copy() if signed_ring_area(h) > 0 else h for h in self.holes]
        shp = ShapelyPolygon(self.outer, [h for h in self.holes])
        if not shp.is_valid:
            raise InvalidGeometryError(f"invalid polygon: {shapely.is_valid_reason(shp)}")
        outer_only = ShapelyPolygon(self.outer)
        for i, h in enumerate(self.holes):
            hole_poly = ShapelyPolygon(h[::-1])
            if not outer_only.contains_properly(hole_poly):
                raise InvalidGeometryError(f"hole {i} not strictly inside outer ring")
        for i in range(len(self.holes)):
            for j in range(i + 1, len(self.holes)):
                if ShapelyPolygon(self.holes[i][::-1]).intersects(ShapelyPolygon(self.holes[j][::-1])):
                    raise InvalidGeometryError(f"holes {i} and {j} are not disjoint")
        self._shapely = shp

    @classmethod
    def rectangle(cls, x0, y0, x1, y1) -> "PolygonWithHoles":
        return cls(np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=float))

    @classmethod
    def from_shapely(cls, shp: ShapelyPolygon) -> "PolygonWithHoles":
        return cls(np.asarray(shp.exterior.coords), [np.asarray(r.coords) for r in shp.interiors])

    def to_shapely(self) -> ShapelyPolygon:
        return self._shapely

    @property
    def area(self) -> float:
        return signed_ring_area(self.outer) + sum(signed_ring_area(h) for h in self.holes)

    @property
    def perimeter(self) -> float:
        """Total boundary length, outer ring plus hole rings."""
        return ring_perimeter(self.outer) + sum(ring_perimeter(h) for h in self.holes)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return self._shapely.bounds

    def contains_points(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return shapely.contains_xy(self._shapely, xy[:, 0], xy[:, 1])

    def contains_point(self, p) -> bool:
        return bool(shapely.contains_xy(self._shapely, p[0], p[1]))

    def sample_interior(self, rng: np.random.Generator, n: int, max_tries: int = 200) -> np.ndarray:
        """Uniform interior points by rejection from the bounding box."""
        x0, y0, x1, y1 = self.bounds
        out = np.empty((0, 2))
        for _ in range(max_tries):
            need = n - len(out)
            if need <= 0:
                break
            cand = rng.uniform((x0, y0), (x1, y1), size=(max(4 * need, 32), 2))
            out = np.vstack([out, cand[self.contains_points(cand)]])
        if len(out) < n:
            raise InvalidGeometryError("cannot sample interior points of a degenerate polygon")
        return out[:n]


def polygon_area(poly: PolygonWithHoles) -> float:
    """Shoelace area of the outer ring minus the holes; must be positive."""
    a = poly.area
    if a <= 0:
        raise InvalidGeometryError(f"degenerate polygon with area {a}")
    return a


def _shapely_to_list(geom) -> list[PolygonWithHoles]:
    if geom.is_empty:
        return []
    if isinstance(geom, ShapelyPolygon):
        parts = [geom]
    elif isinstance(geom, MultiPolygon):
        parts = list(geom.geoms)
    else:  # GeometryCollection from clipping: keep polygonal pieces only
        parts = [g for g in getattr(geom, "geoms", []) if isinstance(g, ShapelyPolygon)]
    out = []
    for p in parts:
        if p.area <= 1e-9:
            continue
        try:
            out.append(PolygonWithHoles.from_shapely(p))
        except InvalidGeometryError:
            # zero-measure sliver from clipping; drop it
            continue
    # deterministic ordering for downstream stages
    out.sort(key=lambda q: (-q.area, q.outer[:, 0].min(), q.outer[:, 1].min()))
    return out


def mitered_offset(poly: PolygonWithHoles, d: float) -> list[PolygonWithHoles]:
    """Inward offset by ``d`` with miter joins; may split or collapse.

    Returns the region at distance >= d from the boundary (outer ring and
    holes). An empty list means the polygon collapsed.
    """
    if d <= 0:
        raise InvalidGeometryError(f"offset distance must be positive, got {d}")
    shrunk = poly.to_shapely().buffer(-d, join_style="mitre", mitre_limit=MITRE_LIMIT)
    return _shapely_to_list(shrunk)


def voronoi_cell_pieces(seeds: np.ndarray, boundary: PolygonWithHoles) -> list[tuple[int, PolygonWithHoles]]:
    """Voronoi cells of ``seeds`` clipped to ``boundary``.

    Cells are computed against a padded bounding box via mirrored seed points,
    then clipped to the boundary polygon with holes. A cell that the clipping
    splits yields one entry per piece, all mapped to the same seed index.
    """
    seeds = np.asarray(seeds, dtype=float)
    if seeds.ndim != 2 or seeds.shape[1] != 2 or len(seeds) == 0:
        raise InvalidGeometryError("seeds must be a non-empty (n, 2) array")
    inside = boundary.contains_points(seeds)
    if not inside.all():
        raise InvalidGeometryError(f"seed {int(np.flatnonzero(~inside)[0])} lies outside the boundary")
    n = len(seeds)
    if n > 1:
        d2 = np.sum((seeds[:, None, :] - seeds[None, :, :]) ** 2, axis=-1)
        d2[np.diag_indices(n)] = np.inf
        if d2.min() < (2 * EXACT_TOL) ** 2:
            raise InvalidGeometryError("coincident seed points")
    if n == 1:
        return [(0, boundary)]

    x0, y0, x1, y1 = boundary.bounds
    pad = 0.05 * max(x1 - x0, y1 - y0, 1e-9)
    x0, y0, x1, y1 = x0 - pad, y0 - pad, x1 + pad, y1 + pad
    mirrored = np.vstack([
        seeds,
        np.column_stack([2 * x0 - seeds[:, 0], seeds[:, 1]]),
        np.column_stack([2 * x1 - seeds[:, 0], seeds[:, 1]]),
        np.column_stack([seeds[:, 0], 2 * y0 - seeds[:, 1]]),
        np.column_stack([seeds[:, 0], 2 * y1 - seeds[:, 1]]),
    ])
    vor = Voronoi(mirrored)
    boundary_shp = boundary.to_shapely()
    pieces: list[tuple[int, PolygonWithHoles]] = []
    for i in range(n):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:  # mirrors guarantee finite cells
            raise InvalidGeometryError(f"unbounded Voronoi cell for seed {i}")
        cell = ShapelyPolygon(vor.vertices[region])
        clipped = cell.intersection(boundary_shp)
        for piece in _shapely_to_list(clipped):
            pieces.append((i, piece))
    return pieces


def voronoi_cells(seeds: np.ndarray, boundary: PolygonWithHoles) -> list[PolygonWithHoles]:
    """One clipped Voronoi cell per seed (flattened if clipping splits cells)."""
    return [piece for _, piece in voronoi_cell_pieces(seeds, boundary)]


@dataclass
class SegmentHalfspaces:
    """Halfspace form of a line segment.

    Rows of ``A`` are (n0, -n1, -n2) and ``b`` is (a0, -a1, -a2): a point p
    lies on the segment iff A p <= b and the equality row holds with equality,
    i.e. n0.p = a0. ``lb``/``ub`` bound the parent trail's coordinates.
    """

    A: np.ndarray
    b: np.ndarray
    equality_row: int
    endpoints: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.endpoints[1] - self.endpoints[0]))

    def contains(self, p, tol: float = EXACT_TOL) -> bool:
        p = np.asarray(p, dtype=float)
        resid = self.A @ p - self.b
        if np.any(resid > tol):
            return False
        return abs(resid[self.equality_row]) <= tol

    def project(self, p) -> tuple[np.ndarray, float]:
        """Closest point on the segment and its distance."""
        p = np.asarray(p, dtype=float)
        a, bb = self.endpoints
        d = bb - a
        t = float(np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0))
        q = a + t * d
        return q, float(np.linalg.norm(p - q))


def segment_to_halfspaces(p0, p1, trail_bbox) -> SegmentHalfspaces:
    """Build the A x <= b representation of the segment p0-p1 (Eq-style rows).

    ``trail_bbox`` is ((xmin, ymin), (xmax, ymax)) of the parent trail.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    norm = np.linalg.norm(d)
    if norm < EXACT_TOL:
        raise InvalidGeometryError("zero-length segment")
    dhat = d / norm
    n0 = np.array([-dhat[1], dhat[0]])
    a0 = float(n0 @ p0)
    n1, a1 = dhat, float(dhat @ p0)
    n2, a2 = -dhat, float(-dhat @ p1)
    A = np.vstack([n0, -n1, -n2])
    b = np.array([a0, -a1, -a2])
    lb = np.asarray(trail_bbox[0], dtype=float)
    ub = np.asarray(trail_bbox[1], dtype=float)
    return SegmentHalfspaces(A=A, b=b, equality_row=0, endpoints=np.vstack([p0, p1]), lb=lb, ub=ub)


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    d = b - a
    denom = float(np.dot(d, d))
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = np.clip(np.dot(p - a, d) / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * d)))


def min_enclosing_circle(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Smallest circle containing all points (Welzl, deterministic order)."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)

    def circle_two(a, b):
        c = (a + b) / 2
        return c, float(np.linalg.norm(a - c))

    def circle_three(a, b, c):
        ax, ay = a; bx, by = b; cx, cy = c
        dd = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        if abs(dd) < 1e-14:
            # collinear: fall back to the farthest pair
            pairs = [(a, b), (a, c), (b, c)]
            far = max(pairs, key=lambda pq: np.linalg.norm(pq[0] - pq[1]))
            return circle_two(*far)
        ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / dd
        uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / dd
        center = np.array([ux, uy])
        return center, float(np.linalg.norm(a - center))

    def contains(c, r, p):
        return np.linalg.norm(p - c) <= r + 1e-9

    if len(pts) == 0:
        raise InvalidGeometryError("no points for enclosing circle")
    if len(pts) == 1:
        return pts[0].copy(), 0.0
    c, r = circle_two(pts[0], pts[1])
    for i in range(2, len(pts)):
        if contains(c, r, pts[i]):
            continue
        c, r = circle_two(pts[0], pts[i])
        for j in range(1, i):
            if contains(c, r, pts[j]):
                continue
            c, r = circle_two(pts[j], pts[i])
            for k in range(j):
                if contains(c, r, pts[k]):
                    continue
                c, r = circle_three(pts[i], pts[j], pts[k])
    return c, r
