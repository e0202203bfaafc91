import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import LineString, Point, Polygon

from histroads.geometry import (InvalidGeometryError, RoadSegment, SamplingParams, SheetFootprint,
                                assign_segment_to_sheet, buffer_segment, cross_section_positions,
                                generate_cross_sections, nearest_rank, point_and_tangent_at, polyline_length,
                                stratify_segments)


def random_polyline(rng, n=None):
    n = n or int(rng.integers(2, 12))
    steps = rng.normal(0, 60, (n - 1, 2))
    steps[np.hypot(*steps.T) < 1e-3] += 1.0
    return np.vstack([[0, 0], np.cumsum(steps, axis=0)]) + rng.uniform(-1e4, 1e4, 2)


class TestPolylineLength:
    def test_345(self):
        assert polyline_length([(0, 0), (3, 4)]) == 5.0

    def test_axis_aligned(self):
        assert polyline_length([(0, 0), (1, 0), (1, 1)]) == 2.0

    def test_random_against_pairwise_sum(self):
        rng = np.random.default_rng(0)
        v = random_polyline(rng, 10)
        expected = sum(math.dist(v[i], v[i + 1]) for i in range(len(v) - 1))
        assert polyline_length(v) == pytest.approx(expected, rel=1e-12)

    def test_too_few_vertices(self):
        with pytest.raises(InvalidGeometryError):
            polyline_length([(0, 0)])


def test_segment_rejects_coincident_vertices():
    with pytest.raises(InvalidGeometryError):
        RoadSegment("x", [(0, 0), (0, 0), (1, 1)])


class TestPointAndTangent:
    def test_first_chord(self):
        p, t = point_and_tangent_at([(0, 0), (10, 0)], 5)
        assert p == (5, 0) and t == (1, 0)

    def test_second_chord(self):
        p, t = point_and_tangent_at([(0, 0), (10, 0), (10, 10)], 15)
        assert p == (10, 5) and t == (0, 1)

    def test_shared_vertex_uses_following_chord(self):
        p, t = point_and_tangent_at([(0, 0), (10, 0), (10, 10)], 10)
        assert p == (10, 0) and t == (0, 1)

    def test_end_point(self):
        p, t = point_and_tangent_at([(0, 0), (10, 0), (10, 10)], 20)
        assert p == (10, 10) and t == (0, 1)

    @pytest.mark.parametrize("s", [-0.1, 20.01])
    def test_out_of_range(self, s):
        with pytest.raises(ValueError):
            point_and_tangent_at([(0, 0), (10, 0), (10, 10)], s)


class TestCrossSections:
    def test_straight_100m(self):
        cs = generate_cross_sections(RoadSegment("a", [(0, 0), (100, 0)]))
        assert [c.arc_pos for c in cs] == [12.5, 37.5, 62.5, 87.5]
        for c in cs:
            np.testing.assert_allclose(c.normal, (0, 1))

    def test_short_segment_midpoint(self):
        cs = generate_cross_sections(RoadSegment("a", [(0, 0), (10, 0)]))
        assert len(cs) == 1 and cs[0].arc_pos == 5.0

    def test_default_sample_offsets(self):
        (c,) = generate_cross_sections(RoadSegment("a", [(0, 0), (10, 0)]))
        offsets = c.samples[:, 1]
        expected = np.concatenate([-np.arange(47.5, 0, -5.0), np.arange(2.5, 50, 5.0)])
        np.testing.assert_allclose(offsets, expected, atol=1e-12)
        assert len(offsets) == 20

    def test_samples_negative_side_first(self):
        (c,) = generate_cross_sections(RoadSegment("a", [(0, 0), (0, 10)]))
        # heading north, the +90 degree normal points west
        np.testing.assert_allclose(c.normal, (-1, 0), atol=1e-15)
        assert c.samples[0, 0] > c.samples[-1, 0]

    def test_properties_random(self):
        rng = np.random.default_rng(1)
        params = SamplingParams()
        for _ in range(200):
            seg = RoadSegment("r", random_polyline(rng))
            cs = generate_cross_sections(seg, params)
            L = seg.length_m
            expected = max(1, math.floor((L - 12.5) / 25) + 1) if L >= 25 else 1
            assert len(cs) == expected
            for c in cs:
                _, t = point_and_tangent_at(seg.vertices, c.arc_pos)
                assert abs(np.dot(c.normal, t)) < 1e-9
                gaps = np.hypot(*np.diff(c.samples, axis=0).T)
                np.testing.assert_allclose(gaps, 5.0, atol=1e-9)
                np.testing.assert_allclose(c.samples[::-1] + c.samples, np.tile(2 * c.center, (20, 1)), atol=1e-6)

    def test_positions_inclusive_at_length(self):
        np.testing.assert_allclose(cross_section_positions(112.5, 25.0), [12.5, 37.5, 62.5, 87.5, 112.5])

    def test_odd_sample_count_has_axis_sample(self):
        (c,) = generate_cross_sections(RoadSegment("a", [(0, 0), (10, 0)]),
                                       SamplingParams(csl_m=25, n_samples=5))
        np.testing.assert_allclose(c.samples[:, 1], [-10, -5, 0, 5, 10])

    def test_params_validation(self):
        with pytest.raises(ValueError):
            SamplingParams(n_samples=1)
        with pytest.raises(ValueError):
            SamplingParams(n_samples=20, target_w=10)


class TestBuffer:
    @pytest.mark.parametrize("L,r", [(100, 125), (1000, 125), (10, 50), (500, 5)])
    def test_stadium_area(self, L, r):
        buf = buffer_segment(RoadSegment("a", [(0, 0), (L, 0)]), r)
        assert not buf.fallback
        assert buf.polygon.area == pytest.approx(2 * L * r + math.pi * r * r, rel=0.01)

    def test_point_like_segment(self):
        buf = buffer_segment(RoadSegment("a", [(0, 0), (1, 0)]), 125)
        assert buf.polygon.area == pytest.approx(math.pi * 125 ** 2, rel=0.01)

    def test_contains_vertices_and_nested(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            seg = RoadSegment("a", random_polyline(rng, 6))
            small = buffer_segment(seg, 20).polygon
            big = buffer_segment(seg, 40).polygon
            assert all(small.covers(Point(v)) for v in seg.vertices)
            assert big.area >= small.area
            minx, miny, maxx, maxy = small.bounds
            pts = rng.uniform((minx, miny), (maxx, maxy), (300, 2))
            for p in pts:
                if small.contains(Point(p)):
                    assert big.covers(Point(p))

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError):
            buffer_segment(RoadSegment("a", [(0, 0), (1, 0)]), 0)


class TestStratify:
    def segs(self, lengths):
        return [RoadSegment(f"s{i}", [(0, 0), (L, 0)]) for i, L in enumerate(lengths)]

    def test_uniform_1_to_100(self):
        thr, labels = stratify_segments(self.segs(range(1, 101)))
        assert thr == 90
        # rural iff length >= threshold, so 90..100 are rural
        assert labels.count("rural") == 11

    def test_all_equal(self):
        thr, labels = stratify_segments(self.segs([7.0] * 9))
        assert thr == 7.0 and set(labels) == {"rural"}

    def test_empty(self):
        with pytest.raises(ValueError):
            stratify_segments([])

    @given(st.lists(st.floats(1, 1e4), min_size=1, max_size=300, unique=True))
    @settings(max_examples=60, deadline=None)
    def test_urban_fraction_near_percentile(self, lengths):
        _, labels = stratify_segments(self.segs(lengths))
        n = len(lengths)
        assert abs(labels.count("urban") / n - 0.9) <= 1.0 / n + 1e-12

    def test_nearest_rank(self):
        assert nearest_rank([3, 1, 2], 0.5) == 2
        assert nearest_rank([5], 0.9) == 5


class TestSheetAssignment:
    sheet_a = SheetFootprint("A", [(0, -50), (70, -50), (70, 50), (0, 50)], 1900)
    sheet_b = SheetFootprint("B", [(70, -50), (200, -50), (200, 50), (70, 50)], 1900)

    def test_fully_inside(self):
        seg = RoadSegment("s", [(5, 0), (60, 0)])
        assert assign_segment_to_sheet(seg, [self.sheet_a, self.sheet_b]) == "A"

    def test_majority_length(self):
        seg = RoadSegment("s", [(0, 0), (30, 20), (100, 0)])
        # independent oracle: exact clipped lengths
        line = LineString(seg.vertices)
        share_a = line.intersection(self.sheet_a.polygon).length / line.length
        assert share_a > 0.5
        assert assign_segment_to_sheet(seg, [self.sheet_b, self.sheet_a]) == "A"

    def test_70_30(self):
        seg = RoadSegment("s", [(0, 0), (100, 0)])
        assert assign_segment_to_sheet(seg, [self.sheet_a, self.sheet_b]) == "A"
        seg2 = RoadSegment("t", [(40, 0), (140, 0)])
        assert assign_segment_to_sheet(seg2, [self.sheet_a, self.sheet_b]) == "B"

    def test_outside(self):
        seg = RoadSegment("s", [(500, 500), (600, 500)])
        assert assign_segment_to_sheet(seg, [self.sheet_a, self.sheet_b]) is None

    def test_invalid_footprint(self):
        with pytest.raises(InvalidGeometryError):
            SheetFootprint("bow", [(0, 0), (1, 1), (1, 0), (0, 1)], 1900)
