"""Planar geometry of road segments.

Everything here works in a single planar metric CRS (meters). Vertices are
kept as ``(n, 2)`` float arrays; :class:`Point2D` is only a convenience for
scalar results.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

logger = logging.getLogger(__name__)

UNASSIGNED = None
"""Marker returned by :func:`assign_segment_to_sheet` when no sheet matches."""


class InvalidGeometryError(ValueError):
    """Raised for polylines or polygons that violate their invariants."""


class Point2D(NamedTuple):
    x: float
    y: float


def as_vertices(vertices) -> np.ndarray:
    """Coerce a vertex sequence to a float ``(n, 2)`` array."""
    arr = np.asarray(vertices, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidGeometryError(f"expected (n, 2) vertices, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise InvalidGeometryError("a polyline needs at least 2 vertices")
    if not np.all(np.isfinite(arr)):
        raise InvalidGeometryError("non-finite vertex coordinate")
    return arr


def _chord_lengths(v: np.ndarray) -> np.ndarray:
    return np.hypot(np.diff(v[:, 0]), np.diff(v[:, 1]))


def polyline_length(vertices) -> float:
    """Sum of the Euclidean lengths of consecutive vertex pairs."""
    return float(_chord_lengths(as_vertices(vertices)).sum())


@dataclass(frozen=True)
class RoadSegment:
    """An identified road polyline.

    ``stratum`` is filled in by :func:`stratify_segments` ("urban"/"rural").
    """

    id: str
    vertices: np.ndarray
    stratum: str | None = None
    cum_length: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = as_vertices(self.vertices)
        chords = _chord_lengths(v)
        if np.any(chords == 0):
            raise InvalidGeometryError(f"segment {self.id!r}: coincident consecutive vertices")
        v.setflags(write=False)
        cum = np.concatenate([[0.0], np.cumsum(chords)])
        cum.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cum_length", cum)

    @property
    def length_m(self) -> float:
        return float(self.cum_length[-1])

    def with_stratum(self, stratum: str | None) -> "RoadSegment":
        return RoadSegment(self.id, self.vertices, stratum)


def _locate(cum: np.ndarray, s: np.ndarray) -> np.ndarray:
    # Chord index per arc position; a position on a shared vertex belongs to
    # the following chord, the very end to the last chord.
    idx = np.searchsorted(cum, s, side="right") - 1
    return np.clip(idx, 0, len(cum) - 2)


def points_and_tangents(vertices, s, cum_length=None):
    """Vectorised :func:`point_and_tangent_at` for an array of arc positions."""
    v = as_vertices(vertices)
    cum = cum_length if cum_length is not None else np.concatenate([[0.0], np.cumsum(_chord_lengths(v))])
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0) or np.any(s > cum[-1]):
        raise ValueError(f"arc position out of range [0, {cum[-1]}]")
    i = _locate(cum, s)
    chord = v[i + 1] - v[i]
    clen = cum[i + 1] - cum[i]
    t = (s - cum[i]) / clen
    points = v[i] + chord * t[:, None]
    tangents = chord / clen[:, None]
    return points, tangents


def point_and_tangent_at(vertices, s: float) -> tuple[Point2D, tuple[float, float]]:
    """Point at arc length ``s`` and the unit direction of its chord.

    Raises
    ------
    ValueError
        If ``s`` lies outside ``[0, length]``.
    """
    p, t = points_and_tangents(vertices, [s])
    return Point2D(float(p[0, 0]), float(p[0, 1])), (float(t[0, 0]), float(t[0, 1]))


@dataclass(frozen=True)
class SamplingParams:
    """Cross-section layout and the regularised image shape.

    ``target_w`` is the axial image width, which is the number of samples
    per cross-section, so it always equals ``n_samples``.
    """

    csd_m: float = 25.0
    csl_m: float = 100.0
    n_samples: int = 20
    target_h: int = 20
    target_w: int | None = None

    def __post_init__(self):
        if self.target_w is None:
            object.__setattr__(self, "target_w", self.n_samples)
        if not (self.csd_m > 0 and self.csl_m > 0 and self.target_h > 0):
            raise ValueError("sampling parameters must be positive")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.target_w != self.n_samples:
            raise ValueError("target_w must equal n_samples")

    @property
    def spacing_m(self) -> float:
        return self.csl_m / self.n_samples

    def offsets(self) -> np.ndarray:
        """Signed sample offsets along the normal, negative side first."""
        j = np.arange(self.n_samples, dtype=float)
        return (j - (self.n_samples - 1) / 2.0) * self.spacing_m


@dataclass(frozen=True)
class CrossSection:
    center: np.ndarray
    normal: np.ndarray
    samples: np.ndarray
    arc_pos: float


def cross_section_positions(length_m: float, csd_m: float) -> np.ndarray:
    """Arc positions of cross-section centres: csd/2, 3csd/2, ... <= length."""
    if length_m < csd_m:
        return np.array([length_m / 2.0])
    n = int(math.floor((length_m - csd_m / 2.0) / csd_m)) + 1
    return csd_m / 2.0 + csd_m * np.arange(n, dtype=float)


def cross_section_samples(segment: RoadSegment, params: SamplingParams):
    """Sample grid for all cross-sections of a segment.

    Returns
    -------
    arc_pos : (h,) array
    centers, normals : (h, 2) arrays
    samples : (h, n_samples, 2) array of world coordinates
    """
    arc = cross_section_positions(segment.length_m, params.csd_m)
    centers, tangents = points_and_tangents(segment.vertices, arc, segment.cum_length)
    normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
    offs = params.offsets()
    samples = centers[:, None, :] + offs[None, :, None] * normals[:, None, :]
    return arc, centers, normals, samples


def generate_cross_sections(segment: RoadSegment, params: SamplingParams | None = None) -> list[CrossSection]:
    params = params or SamplingParams()
    arc, centers, normals, samples = cross_section_samples(segment, params)
    return [
        CrossSection(centers[i], normals[i], samples[i], float(arc[i]))
        for i in range(len(arc))
    ]


class BufferResult(NamedTuple):
    polygon: Polygon
    fallback: bool


def buffer_segment(segment: RoadSegment, radius_m: float) -> BufferResult:
    """Round-capped, round-joined buffer (16 chords per semicircle).

    If the outline comes back invalid the convex hull of the offset
    outline is used instead and ``fallback`` is set.
    """
    if radius_m <= 0:
        raise ValueError("buffer radius must be positive")
    poly = LineString(segment.vertices).buffer(radius_m, quad_segs=8)
    if poly.is_valid and poly.geom_type == "Polygon":
        return BufferResult(poly, False)
    logger.warning("buffer of segment %s is not simple; using convex hull", segment.id)
    return BufferResult(poly.convex_hull, True)


def nearest_rank(values, p: float) -> float:
    """Nearest-rank percentile (no interpolation), ``p`` in (0, 1]."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("percentile of an empty set")
    if not 0 < p <= 1:
        raise ValueError("percentile must be in (0, 1]")
    rank = max(1, math.ceil(round(p * x.size, 9)))
    return float(x[rank - 1])


def stratify_segments(segments: Sequence[RoadSegment], percentile: float = 0.90):
    """Split segments into urban/rural at a length percentile.

    Returns the threshold and one label per segment; a segment is rural
    when its length is at least the threshold.
    """
    if len(segments) == 0:
        raise ValueError("cannot stratify an empty segment set")
    lengths = np.array([s.length_m for s in segments])
    threshold = nearest_rank(lengths, percentile)
    labels = ["rural" if l >= threshold else "urban" for l in lengths]
    return threshold, labels


@dataclass(frozen=True)
class SheetFootprint:
    sheet_id: str
    polygon: Polygon
    epoch_year: int

    def __post_init__(self):
        poly = self.polygon
        if not isinstance(poly, Polygon):
            poly = Polygon(np.asarray(poly, dtype=float))
            object.__setattr__(self, "polygon", poly)
        if not poly.is_valid or poly.area <= 0:
            raise InvalidGeometryError(f"footprint {self.sheet_id!r} is not a simple polygon with positive area")
        shapely.prepare(poly)


def arc_step_points(segment: RoadSegment, step_m: float = 1.0) -> np.ndarray:
    """Points at the midpoints of consecutive ``step_m`` arc intervals."""
    L = segment.length_m
    n = max(1, int(math.ceil(L / step_m)))
    s = (np.arange(n) + 0.5) * (L / n)
    pts, _ = points_and_tangents(segment.vertices, s, segment.cum_length)
    return pts


def assign_segment_to_sheet(segment: RoadSegment, footprints: Sequence[SheetFootprint], step_m: float = 1.0):
    """Sheet holding the largest share of the segment's length.

    Ties go to the lexicographically smallest sheet id. Returns
    :data:`UNASSIGNED` when the segment lies outside every footprint.
    """
    pts = arc_step_points(segment, step_m)
    best, best_count = UNASSIGNED, 0
    for fp in sorted(footprints, key=lambda f: f.sheet_id):
        count = int(np.count_nonzero(shapely.intersects_xy(fp.polygon, pts[:, 0], pts[:, 1])))
        if count > best_count:
            best, best_count = fp.sheet_id, count
    return best
