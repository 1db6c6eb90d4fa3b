import math

import numpy as np
import pytest
import shapely
from shapely.geometry import LineString

from fleetcover.errors import InfeasibleError, InvalidGeometryError
from fleetcover.geometry import PolygonWithHoles
from fleetcover.trails import generate_trails, generate_zigzag, make_trail, path_metrics

from conftest import rect
from oracles import coverage_max_distance


def ring_linestring(trail):
    return LineString(np.vstack([trail.ring, trail.ring[:1]]))


def has_square_ring(trails, lo, hi):
    """Is some trail the axis-aligned square/rect [lo, hi]^2?"""
    for t in trails:
        if len(t.ring) == 4 and np.allclose(sorted(t.ring[:, 0]), [lo, lo, hi, hi]) and np.allclose(
            sorted(t.ring[:, 1]), [lo, lo, hi, hi]
        ):
            return True
    return False


class TestGenerateTrails:
    def test_square_rings_at_scheduled_offsets(self):
        sq = rect(0, 0, 10, 10)
        trails = generate_trails(sq, 2.0)
        # scheduled rings at depths 1 and 3
        assert has_square_ring(trails, 1.0, 9.0)
        assert has_square_ring(trails, 3.0, 7.0)
        # everything beyond the two rings is gap-fill: degenerate two-vertex loops
        ring_trails = [t for t in trails if len(t.ring) > 2]
        assert len(ring_trails) == 2
        assert coverage_max_distance(sq, trails, n=10_000, seed=1) <= 1.0 + 1e-6

    def test_collapsed_rectangle_emits_medial_trail(self):
        r = rect(0, 0, 10, 4)
        trails = generate_trails(r, 4.0)
        # no offset ring fits (inradius = w/2): a degenerate medial segment covers it
        assert all(t.is_degenerate for t in trails)
        main = max(trails, key=lambda t: t.perimeter)
        assert np.allclose(main.ring[:, 1], 2.0, atol=1e-6)
        assert main.perimeter == pytest.approx(2 * (main.ring[1, 0] - main.ring[0, 0]))
        assert coverage_max_distance(r, trails, n=10_000, seed=2) <= 2.0 + 1e-6

    def test_hole_gets_surrounded_and_avoided(self):
        poly = PolygonWithHoles(
            [(0, 0), (40, 0), (40, 40), (0, 40)],
            [[(16, 16), (24, 16), (24, 24), (16, 24)]],
        )
        w = 3.0
        trails = generate_trails(poly, w)
        hole_shp = shapely.geometry.Polygon([(16, 16), (24, 16), (24, 24), (16, 24)])
        surrounds = [
            t for t in trails
            if len(t.ring) > 2 and shapely.geometry.Polygon(t.ring).contains(hole_shp)
        ]
        assert surrounds, "at least one trail ring must surround the hole"
        for t in trails:
            inter = ring_linestring(t).intersection(hole_shp.buffer(-1e-9))
            assert inter.is_empty
        assert coverage_max_distance(poly, trails, n=10_000, seed=3) <= w / 2 + 1e-6

    def test_narrow_subarea_raises(self):
        with pytest.raises(InfeasibleError, match="narrower than coverage width"):
            generate_trails(rect(0, 0, 3, 3), 10.0)

    def test_nonpositive_width_rejected(self):
        with pytest.raises(InvalidGeometryError):
            generate_trails(rect(0, 0, 10, 10), -1.0)

    def test_trails_never_cross(self):
        shapes = [
            rect(0, 0, 10, 10),
            PolygonWithHoles([(0, 0), (30, 2), (38, 22), (15, 30), (-3, 18)]),
            PolygonWithHoles(
                [(0, 0), (40, 0), (40, 40), (0, 40)],
                [[(16, 16), (24, 16), (24, 24), (16, 24)]],
            ),
        ]
        for poly in shapes:
            trails = generate_trails(poly, 3.0)
            lines = [ring_linestring(t) for t in trails]
            for i in range(len(lines)):
                for j in range(i + 1, len(lines)):
                    assert not lines[i].crosses(lines[j]), f"trails {i} and {j} cross"

    def test_vertex_keys_invariants(self):
        for poly, w in [(rect(0, 0, 20, 14), 3.0), (rect(0, 0, 10, 4), 4.0)]:
            for t in generate_trails(poly, w):
                keys = t.vertex_keys
                assert keys[0] == 0.0
                assert np.all(np.diff(keys) > 0)
                assert keys[-1] < 1.0
                assert t.perimeter == pytest.approx(sum(e.length for e in t.edges))

    def test_coverage_on_irregular_convex_area(self):
        poly = PolygonWithHoles([(0, 0), (60, 5), (70, 45), (25, 60), (-8, 30)])
        w = 6.5
        trails = generate_trails(poly, w)
        assert coverage_max_distance(poly, trails, n=10_000, seed=4) <= w / 2 + 1e-6


class TestGenerateZigzag:
    def test_rectangle_pass_and_turn_counts(self):
        path = generate_zigzag(rect(0, 0, 100, 60), 6.5, sweep_direction=0.0)
        # ceil(60 / 6.5) = 10 passes, two vertices each
        assert len(path) == 20
        m = path_metrics(path, closed=False)
        assert m.turn_count == 18

    def test_square_of_width_single_pass(self):
        path = generate_zigzag(rect(0, 0, 6.5, 6.5), 6.5)
        assert len(path) == 2
        assert path_metrics(path, closed=False).turn_count == 0
        np.testing.assert_allclose(path[:, 1], 3.25)

    def test_convex_area_has_unsplit_passes(self):
        poly = PolygonWithHoles([(0, 0), (50, 3), (55, 35), (20, 45), (-5, 25)])
        path = generate_zigzag(poly, 5.0)
        # each pass contributes exactly 2 vertices when no pass splits
        ys = np.round(path[:, 1], 9)
        uniq, counts = np.unique(ys, return_counts=True)
        assert np.all(counts == 2)

    def test_sweep_direction_rotates_passes(self):
        path = generate_zigzag(rect(0, 0, 40, 20), 4.0, sweep_direction=math.pi / 2)
        # vertical passes: x constant within each pass
        assert len(path) == 2 * math.ceil(40 / 4.0)

    def test_zigzag_covers_area(self):
        poly = rect(0, 0, 50, 33)
        w = 6.5
        path = generate_zigzag(poly, w)
        line = LineString(path)
        rng = np.random.default_rng(5)
        pts = poly.sample_interior(rng, 4000)
        d = shapely.distance(line, shapely.points(pts))
        assert d.max() <= w / 2 + 1e-6


class TestPathMetrics:
    def test_square_ring(self):
        t = make_trail(np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float))
        m = path_metrics(t)
        assert m.turn_count == 4
        assert m.total_turning_angle == pytest.approx(2 * math.pi)
        assert m.length == pytest.approx(4.0)

    def test_two_concentric_rings_total_four_pi(self):
        t1 = make_trail(np.array([(0, 0), (10, 0), (10, 10), (0, 10)], dtype=float))
        t2 = make_trail(np.array([(2, 2), (8, 2), (8, 8), (2, 8)], dtype=float))
        total_turns = path_metrics(t1).turn_count + path_metrics(t2).turn_count
        total_angle = path_metrics(t1).total_turning_angle + path_metrics(t2).total_turning_angle
        assert total_turns == 8
        assert total_angle == pytest.approx(4 * math.pi)

    def test_collinear_polyline_no_turns(self):
        m = path_metrics(np.array([(0, 0), (1, 0), (3, 0)], dtype=float), closed=False)
        assert m.turn_count == 0
        assert m.total_turning_angle == pytest.approx(0.0)
        assert m.length == pytest.approx(3.0)

    def test_degenerate_loop_turns(self):
        t = make_trail(np.array([(0, 0), (3, 0)], dtype=float))
        m = path_metrics(t)
        assert m.length == pytest.approx(6.0)
        assert m.turn_count == 2
        assert m.total_turning_angle == pytest.approx(2 * math.pi)

    def test_too_short_path_raises(self):
        with pytest.raises(InvalidGeometryError):
            path_metrics(np.array([(0.0, 0.0)]), closed=False)


class TestTurningStructure:
    def test_convex_subarea_turning_is_two_pi_per_trail(self):
        poly = PolygonWithHoles([(0, 0), (30, 2), (38, 22), (15, 30), (-3, 18)])
        trails = generate_trails(poly, 4.0)
        total = sum(path_metrics(t).total_turning_angle for t in trails)
        assert total == pytest.approx(2 * math.pi * len(trails), rel=1e-9)

    def test_orientation_normalisation(self):
        sq = rect(0, 0, 20, 20)
        trails = generate_trails(sq, 4.0)
        from fleetcover.geometry import signed_ring_area

        for t in trails:
            if len(t.ring) > 2:
                assert signed_ring_area(t.ring) > 0  # outer rings CCW
            assert t.ring[0, 0] == t.ring[:, 0].min()  # v0 lexicographically least
