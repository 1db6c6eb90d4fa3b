import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fleetcover.geometry import PolygonWithHoles


@pytest.fixture
def unit_square():
    return PolygonWithHoles.rectangle(0, 0, 1, 1)


def rect(x0, y0, x1, y1):
    return PolygonWithHoles.rectangle(x0, y0, x1, y1)


def random_convex_polygon(rng, n_vertices=8, radius=50.0, centre=(0.0, 0.0)):
    """Random convex polygon: hull of points on a noisy circle."""
    angles = np.sort(rng.uniform(0, 2 * np.pi, n_vertices))
    radii = radius * rng.uniform(0.6, 1.0, n_vertices)
    pts = np.column_stack([
        centre[0] + radii * np.cos(angles),
        centre[1] + radii * np.sin(angles),
    ])
    import shapely
    hull = shapely.MultiPoint(pts).convex_hull
    return PolygonWithHoles(np.asarray(hull.exterior.coords))


def geojson_map(farmland_rings, obstacles=(), roads=(), frame="local"):
    """Build an in-memory GeoJSON dict for load_map tests."""
    feats = []
    for ring in farmland_rings:
        feats.append({
            "type": "Feature",
            "properties": {"role": "farmland"},
            "geometry": {"type": "Polygon", "coordinates": [list(map(list, ring))]},
        })
    for ring in obstacles:
        feats.append({
            "type": "Feature",
            "properties": {"role": "obstacle"},
            "geometry": {"type": "Polygon", "coordinates": [list(map(list, ring))]},
        })
    for line in roads:
        feats.append({
            "type": "Feature",
            "properties": {"role": "road"},
            "geometry": {"type": "LineString", "coordinates": [list(map(float, p)) for p in line]},
        })
    return {"type": "FeatureCollection", "frame": frame, "features": feats}


def closed_rect_ring(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
