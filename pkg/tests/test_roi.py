import numpy as np
import pytest
from scipy import stats

from histroads.geometry import RoadSegment, SamplingParams
from histroads.raster import AffineTransform, GeoRaster
from histroads.roi import (AxialImage, build_axial_image, column_curve, compute_roi, dump_debug, regularize, roi,
                           segment_seed, select_rows, to_gray)

T = AffineTransform(5, 0, 0, -5, 0, 500)   # pixel centres on multiples of 5 m


def blank(value=255, shape=(101, 101)):
    return GeoRaster(np.full(shape, value, np.uint8), T, "sheet", 1900)


def step_image():
    img = np.zeros((20, 20))
    img[:, 10:] = 255
    return img


class TestAxialImage:
    def test_shape_100m(self):
        img = build_axial_image(RoadSegment("a", [(100, 250), (200, 250)]), blank())
        assert img.values.shape == (4, 20, 3)

    def test_white_raster(self):
        img = build_axial_image(RoadSegment("a", [(100, 250), (200, 250)]), blank())
        assert (img.values == 255).all() and not img.oob_mask.any()

    def test_fully_outside(self):
        seg = RoadSegment("a", [(5000, 5000), (5100, 5000)])
        img = build_axial_image(seg, blank(0))
        assert img.oob_fraction == 1.0 and (img.values == 255).all()
        assert not compute_roi(seg, blank(0)).valid

    def test_row_order_negative_offset_first(self):
        px = np.full((101, 101), 255, np.uint8)
        px[:50, :] = 0   # north of y = 252.5 dark; an east-heading road has its +normal pointing north
        img = build_axial_image(RoadSegment("a", [(100, 251), (200, 251)]), GeoRaster(px, T))
        assert (img.values[:, :10] == 255).all() and (img.values[:, 10:] == 0).all()


class TestRegularize:
    def rgb_rows(self, h, w=20):
        v = np.zeros((h, w, 3), np.uint8)
        v[:] = np.arange(h, dtype=np.uint8)[:, None, None] * 10
        return AxialImage(v, np.zeros((h, w), bool))

    def test_identity(self):
        img = self.rgb_rows(20)
        np.testing.assert_array_equal(regularize(img, 20, 0), to_gray(img.values))

    def test_reflection_example(self):
        # rows [A, B] -> [B, A, A, B, B, A]
        np.testing.assert_array_equal(select_rows(2, 6, 0), [1, 0, 0, 1, 1, 0])

    def test_reflection_single_row(self):
        np.testing.assert_array_equal(select_rows(1, 5, 0), [0] * 5)

    def test_reflection_centres_rows(self):
        idx = select_rows(4, 20, 0)
        top = (20 - 4) // 2
        np.testing.assert_array_equal(idx[top:top + 4], [0, 1, 2, 3])
        np.testing.assert_array_equal(idx[top - 2:top], [1, 0])
        np.testing.assert_array_equal(idx[top + 4:top + 6], [3, 2])

    def test_subsample_sorted_distinct_deterministic(self):
        a = select_rows(57, 20, 123)
        assert len(a) == 20 and len(set(a)) == 20 and (np.diff(a) > 0).all()
        np.testing.assert_array_equal(a, select_rows(57, 20, 123))
        assert not np.array_equal(a, select_rows(57, 20, 124))

    @pytest.mark.parametrize("h", [1, 3, 20, 45])
    def test_constant_input(self, h):
        v = np.full((h, 20, 3), (30, 60, 90), np.uint8)
        out = regularize(AxialImage(v, np.zeros((h, 20), bool)), 20, 5)
        assert out.shape == (20, 20)
        assert np.all(out == out[0, 0])
        assert out[0, 0] == pytest.approx(0.299 * 30 + 0.587 * 60 + 0.114 * 90)


class TestROI:
    def test_constant(self):
        assert roi(np.full((20, 20), 77.0)) == 0

    def test_step_hand_value(self):
        curve = column_curve(step_image())
        assert curve[9] == curve[10] == 2550
        assert np.count_nonzero(curve) == 2
        assert roi(step_image()) == 5100

    def test_edge_columns_one_sided(self):
        img = np.zeros((1, 4))
        img[0, 0] = 10
        np.testing.assert_array_equal(column_curve(img), [-10, -5, 0, 0])

    def test_invariances_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            img = rng.integers(0, 256, (20, 20)).astype(float)
            base = roi(img)
            assert roi(img + rng.integers(-300, 300)) == base
            for alpha in (0.25, 0.5, 2.0, 4.0):
                assert roi(alpha * img) == alpha * base

    def test_contrast_general_alpha(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 255, (20, 20))
        assert roi(1.7 * img) == pytest.approx(1.7 * roi(img), rel=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        assert all(roi(rng.uniform(0, 255, (20, 20))) >= 0 for _ in range(50))


def symbol_raster(contrast: float, sigma: float, rng):
    px = np.full((101, 101), 200.0)
    # road axis y = 250 is row 50; casing lines at rows 49 and 51 (+-5 m)
    px[49, :] -= contrast
    px[51, :] -= contrast
    px += rng.normal(0, sigma, px.shape)
    return GeoRaster(np.clip(np.rint(px), 0, 255).astype(np.uint8), T)


class TestComputeROI:
    seg = RoadSegment("road-1", [(20, 250), (480, 250)])

    def test_symbol_beats_blank(self):
        rng = np.random.default_rng(3)
        with_symbol = compute_roi(self.seg, symbol_raster(150, 0, rng))
        assert with_symbol.roi > compute_roi(self.seg, blank(200)).roi
        assert with_symbol.valid and with_symbol.n_cross_sections == 18   # floor((460 - 12.5) / 25) + 1

    def test_blank_is_zero(self):
        assert compute_roi(self.seg, blank(200)).roi == 0

    def test_seed_determinism(self):
        raster = symbol_raster(100, 20, np.random.default_rng(4))
        long_seg = RoadSegment("long", [(10, 240), (490, 260), (490, 30)])
        a = compute_roi(long_seg, raster, global_seed=9)
        b = compute_roi(long_seg, raster, global_seed=9)
        assert a == b
        assert segment_seed(9, "long") == segment_seed(9, "long") != segment_seed(10, "long")

    def test_oob_limit(self):
        # offsets -47.5 .. -12.5 reach y <= -2.5, past the raster's southern pixel edge: 8 of 20
        seg = RoadSegment("edge", [(20, 10), (480, 10)])
        rec = compute_roi(seg, blank(200))
        assert rec.oob_fraction == 0.4 and rec.valid
        assert compute_roi(seg, blank(200), oob_limit=0.4).valid
        assert not compute_roi(seg, blank(200), oob_limit=0.1).valid

    def test_monotone_in_contrast(self):
        contrasts = np.linspace(0, 180, 100)
        rng = np.random.default_rng(5)
        rois = [compute_roi(self.seg, symbol_raster(c, 8, rng)).roi for c in contrasts]
        rho = stats.spearmanr(contrasts, rois)[0]
        assert rho > 0.9


def test_dump_debug(tmp_path):
    seg = RoadSegment("d1", [(20, 250), (300, 250)])
    dump_debug(seg, symbol_raster(150, 0, np.random.default_rng(0)), tmp_path)
    assert (tmp_path / "d1_axial.pgm").read_bytes().startswith(b"P5\n20 11\n255\n")
    assert (tmp_path / "d1_regularized.pgm").read_bytes().startswith(b"P5\n20 20\n255\n")
    lines = (tmp_path / "d1_curve.csv").read_text().splitlines()
    assert lines[0] == "column,offset_m,gradient_sum" and len(lines) == 21
