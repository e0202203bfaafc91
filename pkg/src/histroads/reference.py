"""Reference labels: built-up fractions in road buffers and manual labels."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from shapely.geometry import Polygon

from .geometry import RoadSegment, points_and_tangents
from .raster import GeoRaster

DEFAULT_BUFFER_M = 125.0
DEFAULT_THRESHOLDS = (0.0, 0.10, 0.25, 0.50, 0.75, 0.90)


class LabelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class BuiltUpFractionRecord:
    segment_id: str
    epoch_year: int
    bua_year: int
    fraction: float


@dataclass(frozen=True)
class ManualLabel:
    segment_id: str
    epoch_year: int
    present: bool


def select_bua_epoch(available_years, map_year: int) -> int:
    """Most recent available year strictly before ``map_year``."""
    earlier = [y for y in available_years if y < map_year]
    if not earlier:
        raise ValueError(f"no built-up layer earlier than {map_year}")
    return max(earlier)


def shoelace_area(ring) -> float:
    """Signed area of a ring (closing vertex optional); CCW is positive."""
    r = np.asarray(ring, dtype=float)
    if len(r) < 3:
        return 0.0
    x, y = r[:, 0], r[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_ring_to_box(ring, xmin: float, ymin: float, xmax: float, ymax: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a ring against an axis-aligned box.

    Works for non-convex rings too as far as area is concerned: the output
    may contain zero-width bridges along the box edges, which contribute
    nothing to the shoelace area.
    """
    pts = np.asarray(ring, dtype=float)
    if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    # (axis, bound, keep-if-greater)
    for axis, bound, greater in ((0, xmin, True), (0, xmax, False), (1, ymin, True), (1, ymax, False)):
        if len(pts) == 0:
            break
        c = pts[:, axis]
        inside = c >= bound if greater else c <= bound
        prev = np.roll(pts, 1, axis=0)
        prev_in = np.roll(inside, 1)
        out = []
        for p, q, p_in, q_in in zip(prev, pts, prev_in, inside):
            if q_in:
                if not p_in:
                    out.append(_intersect(p, q, axis, bound))
                out.append(q)
            elif p_in:
                out.append(_intersect(p, q, axis, bound))
        pts = np.array(out) if out else np.empty((0, 2))
    return pts


def _intersect(p, q, axis, bound):
    t = (bound - p[axis]) / (q[axis] - p[axis])
    r = p + t * (q - p)
    r[axis] = bound
    return r


def polygon_box_area(poly: Polygon, box) -> float:
    """Area of ``poly`` (holes respected) inside an axis-aligned box."""
    area = abs(shoelace_area(clip_ring_to_box(poly.exterior.coords, *box)))
    for hole in poly.interiors:
        area -= abs(shoelace_area(clip_ring_to_box(hole.coords, *box)))
    return area


def _as_polygon(buffer_polygon) -> Polygon:
    if isinstance(buffer_polygon, Polygon):
        return buffer_polygon
    if hasattr(buffer_polygon, "polygon"):
        return buffer_polygon.polygon
    return Polygon(np.asarray(buffer_polygon, dtype=float))


def cell_overlap_areas(buffer_polygon, grid: GeoRaster):
    """Overlap area between the buffer and each grid cell near it.

    Returns ``(rows, cols, areas)`` for the cells whose box intersects the
    buffer's bounding box and lies inside the grid.
    """
    poly = _as_polygon(buffer_polygon)
    t = grid.transform
    if t.b != 0 or t.d != 0:
        raise ValueError("grid must be axis-parallel")
    minx, miny, maxx, maxy = poly.bounds
    c0, r0 = t.world_to_pixel(minx, maxy if t.e < 0 else miny)
    c1, r1 = t.world_to_pixel(maxx, miny if t.e < 0 else maxy)
    cmin, cmax = sorted((float(c0), float(c1)))
    rmin, rmax = sorted((float(r0), float(r1)))
    cols = range(max(0, math.floor(cmin + 0.5)), min(grid.width - 1, math.floor(cmax + 0.5)) + 1)
    rows = range(max(0, math.floor(rmin + 0.5)), min(grid.height - 1, math.floor(rmax + 0.5)) + 1)
    ha, he = abs(t.a) / 2.0, abs(t.e) / 2.0
    out_r, out_c, out_a = [], [], []
    for r in rows:
        for c in cols:
            x, y = t.pixel_to_world(c, r)
            a = polygon_box_area(poly, (float(x) - ha, float(y) - he, float(x) + ha, float(y) + he))
            if a > 0:
                out_r.append(r)
                out_c.append(c)
                out_a.append(a)
    return np.array(out_r, dtype=np.intp), np.array(out_c, dtype=np.intp), np.array(out_a)


def built_up_fraction(buffer_polygon, grid: GeoRaster) -> float:
    """Share of the buffer's area covered by built (255) grid cells."""
    poly = _as_polygon(buffer_polygon)
    total = poly.area
    if total <= 0:
        raise ValueError("buffer polygon has zero area")
    rows, cols, areas = cell_overlap_areas(poly, grid)
    if areas.size == 0:
        return 0.0
    built = grid.pixels[rows, cols] > 0
    return float(min(1.0, areas[built].sum() / total))


def label_from_fraction(fraction: float, threshold: float) -> bool:
    """Road deemed present iff the fraction strictly exceeds the threshold."""
    return fraction > threshold


def parse_manual_labels(source) -> dict[tuple[str, int], ManualLabel]:
    """Parse ``segment_id,epoch_year,present`` CSV text or file.

    Exact duplicate rows are merged; conflicting duplicates raise.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        text = Path(source).read_text()
    else:
        text = source
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["segment_id", "epoch_year", "present"]:
        raise LabelFormatError("line 1: header must be 'segment_id,epoch_year,present'")
    labels: dict[tuple[str, int], ManualLabel] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise LabelFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
        sid, year, present = (c.strip() for c in row)
        if not sid:
            raise LabelFormatError(f"line {lineno}: empty segment_id")
        try:
            year = int(year)
        except ValueError:
            raise LabelFormatError(f"line {lineno}: epoch_year {year!r} is not an integer") from None
        if present not in ("0", "1"):
            raise LabelFormatError(f"line {lineno}: present must be 0 or 1, got {present!r}")
        lab = ManualLabel(sid, year, present == "1")
        old = labels.get((sid, year))
        if old is not None and old.present != lab.present:
            raise LabelFormatError(f"line {lineno}: conflicting duplicate label for {sid!r} in {year}")
        labels[(sid, year)] = lab
    return labels


def export_patch(segment: RoadSegment, raster: GeoRaster, size_m: float = 500.0):
    """Crop a square patch centred on the segment's arc-length midpoint.

    Returns ``(patch, padded)``; parts of the window outside the raster are
    filled with 255 and ``padded`` is set.
    """
    (centre,), _ = points_and_tangents(segment.vertices, [segment.length_m / 2.0], segment.cum_length)
    t = raster.transform
    col, row = t.world_to_pixel(centre[0], centre[1])
    col, row = math.floor(float(col) + 0.5), math.floor(float(row) + 0.5)
    half_c = max(1, round(size_m / abs(t.a) / 2.0)) if t.a else max(1, round(size_m / abs(t.b) / 2.0))
    half_r = max(1, round(size_m / abs(t.e) / 2.0)) if t.e else max(1, round(size_m / abs(t.d) / 2.0))
    c0, r0 = col - half_c, row - half_r
    wc, wr = 2 * half_c, 2 * half_r
    shape = (wr, wc) if raster.bands == 1 else (wr, wc, 3)
    out = np.full(shape, 255, dtype=np.uint8)
    sc0, sr0 = max(c0, 0), max(r0, 0)
    sc1, sr1 = min(c0 + wc, raster.width), min(r0 + wr, raster.height)
    padded = not (sc0 == c0 and sr0 == r0 and sc1 == c0 + wc and sr1 == r0 + wr)
    if sc1 > sc0 and sr1 > sr0:
        out[sr0 - r0:sr1 - r0, sc0 - c0:sc1 - c0] = raster.pixels[sr0:sr1, sc0:sc1]
    patch = GeoRaster(out, t.translated(c0, r0), sheet_id=raster.sheet_id, epoch_year=raster.epoch_year)
    return patch, padded
