"""GeoJSON map ingestion and the local metric frame.

Features must carry properties.role in {farmland, obstacle, road}. WGS-84
coordinates are projected with an equirectangular projection about the map
centroid (fields span a few kilometres at most, so the distortion is
negligible); files marked "frame": "local" are taken as metres as-is.
Obstacles are subtracted from the farmland as holes; road lines are snapped
into a weighted graph at shared endpoints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from .errors import InvalidGeometryError, MapLoadError
from .geometry import PolygonWithHoles
from .routing import RoadGraph

EARTH_RADIUS_M = 6371008.8
ROAD_SNAP_M = 0.5


@dataclass
class FieldMap:
    """Farmland (obstacle holes subtracted), raw obstacles and the road graph."""

    farmland: list[PolygonWithHoles]
    obstacles: list[PolygonWithHoles]
    roads: RoadGraph | None
    origin_lonlat: tuple[float, float] | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def total_area(self) -> float:
        return sum(p.area for p in self.farmland)


def _project(coords: np.ndarray, origin) -> np.ndarray:
    lon0, lat0 = origin
    k = math.pi / 180.0 * EARTH_RADIUS_M
    x = (coords[:, 0] - lon0) * k * math.cos(math.radians(lat0))
    y = (coords[:, 1] - lat0) * k
    return np.column_stack([x, y])


def _looks_like_lonlat(all_coords: np.ndarray) -> bool:
    return bool(
        np.all(np.abs(all_coords[:, 0]) <= 180.0) and np.all(np.abs(all_coords[:, 1]) <= 90.0)
    )


def _feature_coords(geom, idx) -> list[np.ndarray]:
    gtype = geom.get("type")
    if gtype == "Polygon":
        return [np.asarray(r, dtype=float) for r in geom["coordinates"]]
    if gtype == "LineString":
        return [np.asarray(geom["coordinates"], dtype=float)]
    if gtype == "MultiLineString":
        return [np.asarray(part, dtype=float) for part in geom["coordinates"]]
    raise MapLoadError(f"feature {idx}: unsupported geometry type {gtype!r}", feature_index=idx)


def _snap_roads(lines: list[np.ndarray], warnings: list[str]) -> RoadGraph | None:
    if not lines:
        warnings.append("map has no road features; car routing will be skipped")
        return None
    nodes: list[np.ndarray] = []

    def node_for(p: np.ndarray) -> int:
        for i, q in enumerate(nodes):
            if np.linalg.norm(p - q) <= ROAD_SNAP_M:
                return i
        nodes.append(p.copy())
        return len(nodes) - 1

    edges = []
    for line in lines:
        if len(line) < 2:
            continue
        i = node_for(line[0])
        j = node_for(line[-1])
        if i == j:
            warnings.append("dropped a degenerate road segment (both ends snap to one node)")
            continue
        poly = line.copy()
        poly[0] = nodes[i]
        poly[-1] = nodes[j]
        edges.append((i, j, poly))
    if not edges:
        warnings.append("map has no usable road segments; car routing will be skipped")
        return None
    graph = RoadGraph.from_edges(np.vstack(nodes), edges)
    return graph


def load_map(path) -> FieldMap:
    """Parse, validate and project a GeoJSON FeatureCollection."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MapLoadError(f"cannot read map {path}: {exc}") from exc
    if data.get("type") != "FeatureCollection":
        raise MapLoadError("map root must be a GeoJSON FeatureCollection")
    features = data.get("features", [])
    if not features:
        raise MapLoadError("map has no features")

    parsed = []  # (idx, role, list of coord arrays)
    for idx, feat in enumerate(features):
        props = feat.get("properties") or {}
        role = props.get("role")
        if role not in ("farmland", "obstacle", "road"):
            raise MapLoadError(
                f"feature {idx}: missing or unknown role {role!r} "
                "(expected farmland/obstacle/road)",
                feature_index=idx,
            )
        parsed.append((idx, role, _feature_coords(feat.get("geometry") or {}, idx)))

    stacked = np.vstack([c for _, _, cs in parsed for c in cs])
    frame = data.get("frame") or data.get("properties", {}).get("frame")
    if frame not in ("local", "wgs84", None):
        raise MapLoadError(f"unknown frame {frame!r}")
    if frame is None:
        frame = "wgs84" if _looks_like_lonlat(stacked) else "local"
    origin = None
    if frame == "wgs84":
        origin = (float(stacked[:, 0].mean()), float(stacked[:, 1].mean()))
        parsed = [
            (idx, role, [_project(c, origin) for c in cs]) for idx, role, cs in parsed
        ]

    warnings: list[str] = []
    farm_raw: list[PolygonWithHoles] = []
    obstacles: list[PolygonWithHoles] = []
    road_lines: list[np.ndarray] = []
    for idx, role, coords in parsed:
        if role == "road":
            road_lines.extend(coords)
            continue
        try:
            poly = PolygonWithHoles(coords[0], coords[1:])
        except InvalidGeometryError as exc:
            raise MapLoadError(f"feature {idx}: {exc}", feature_index=idx) from exc
        (farm_raw if role == "farmland" else obstacles).append(poly)

    if not farm_raw:
        raise MapLoadError("map contains no farmland features")
    farm_union = shapely.union_all([p.to_shapely() for p in farm_raw])
    # containment is checked against the filled outlines so a round-tripped
    # map (obstacles already cut out as holes) still validates
    farm_filled = shapely.union_all([ShapelyPolygon(p.outer) for p in farm_raw])
    for idx_off, obs in enumerate(obstacles):
        if not farm_filled.contains_properly(obs.to_shapely()):
            raise MapLoadError(
                f"obstacle {idx_off} is not strictly inside the farmland",
            )

    if obstacles:
        obs_union = shapely.union_all([o.to_shapely() for o in obstacles])
        farm_shp = farm_union.difference(obs_union)
    else:
        farm_shp = farm_union
    parts = [farm_shp] if isinstance(farm_shp, ShapelyPolygon) else list(farm_shp.geoms)
    farmland = sorted(
        (PolygonWithHoles.from_shapely(p) for p in parts if p.area > 1e-9),
        key=lambda p: (-p.area, p.outer[:, 0].min(), p.outer[:, 1].min()),
    )

    roads = _snap_roads(road_lines, warnings)
    if roads is not None and not roads.is_connected():
        raise MapLoadError("road graph is disconnected")
    return FieldMap(
        farmland=farmland,
        obstacles=obstacles,
        roads=roads,
        origin_lonlat=origin,
        warnings=warnings,
    )


def _ring_coords(ring: np.ndarray) -> list[list[float]]:
    closed = np.vstack([ring, ring[:1]])
    return [[float(x), float(y)] for x, y in closed]


def map_to_geojson(fm: FieldMap) -> dict:
    """Serialise back to GeoJSON in the local metric frame (lossless round trip)."""
    features = []
    for poly in fm.farmland:
        features.append({
            "type": "Feature",
            "properties": {"role": "farmland"},
            "geometry": {
                "type": "Polygon",
                "coordinates": [_ring_coords(poly.outer)] + [_ring_coords(h) for h in poly.holes],
            },
        })
    for poly in fm.obstacles:
        features.append({
            "type": "Feature",
            "properties": {"role": "obstacle"},
            "geometry": {
                "type": "Polygon",
                "coordinates": [_ring_coords(poly.outer)] + [_ring_coords(h) for h in poly.holes],
            },
        })
    if fm.roads is not None:
        emitted = set()
        for i, nbrs in enumerate(fm.roads.adjacency):
            for j, _, poly in nbrs:
                if (j, i) in emitted or (i, j) in emitted:
                    continue
                emitted.add((i, j))
                features.append({
                    "type": "Feature",
                    "properties": {"role": "road"},
                    "geometry": {
                        "type": "LineString",
                        "coordinates": [[float(x), float(y)] for x, y in poly],
                    },
                })
    out = {"type": "FeatureCollection", "frame": "local", "features": features}
    if fm.origin_lonlat is not None:
        out["origin_lonlat"] = list(fm.origin_lonlat)
    return out


def save_map(fm: FieldMap, path) -> None:
    Path(path).write_text(json.dumps(map_to_geojson(fm), sort_keys=True))
