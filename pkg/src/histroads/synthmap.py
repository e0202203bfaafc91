"""Synthetic "historical map" rasters with known road-symbol placement.

Historical roads are drawn as two hard-edged parallel lines (the casing of
a street symbol) on a light background, optionally dashed, shifted by a
simulated georeferencing error, overlaid with contour-like distractor
lines and Gaussian noise. The ground truth is the set of drawn segments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import LineString
from shapely.ops import substring

from .geometry import RoadSegment, SamplingParams
from .raster import AffineTransform, GeoRaster

DISTRACTOR_GRAY = 120


@dataclass(frozen=True)
class SymbolStyle:
    casing_gap_m: float = 10.0
    line_width_px: int = 1
    ink_gray: int = 20
    background_gray: int = 245
    dash_pattern: tuple[float, float] | None = None
    offset_vec: tuple[float, float] = (0.0, 0.0)
    noise_sigma: float = 5.0
    distractors: int = 0

    def __post_init__(self):
        if self.casing_gap_m < 0 or self.noise_sigma < 0 or self.line_width_px < 1:
            raise ValueError("invalid symbol style")


@dataclass(frozen=True)
class SyntheticScenario:
    segments: tuple
    historical_ids: frozenset
    style: SymbolStyle = field(default_factory=SymbolStyle)
    pixel_size_m: float = 5.0
    seed: int = 0
    year: int = 1900
    sheet_id: str = "synthetic"
    margin_m: float = 100.0

    def __post_init__(self):
        ids = {s.id for s in self.segments}
        if not set(self.historical_ids) <= ids:
            raise ValueError("historical_ids must be a subset of the segment ids")


# -- road networks -----------------------------------------------------------

def grid_network(n_segments: int, block_m: float = 200.0, jitter_m: float = 20.0,
                 bend_m: float = 15.0, seed: int = 0) -> list[RoadSegment]:
    """Jittered street grid; every street between two junctions is a segment.

    The smallest square grid with at least ``n_segments`` streets is built and
    surplus streets are dropped at random.
    """
    rng = np.random.default_rng(seed)
    k = 2
    while 2 * k * (k - 1) < n_segments:
        k += 1
    nodes = np.stack(np.meshgrid(np.arange(k), np.arange(k), indexing="ij"), -1).astype(float) * block_m
    nodes += rng.uniform(-jitter_m, jitter_m, nodes.shape)
    edges = []
    for i in range(k):
        for j in range(k):
            if i + 1 < k:
                edges.append((nodes[i, j], nodes[i + 1, j]))
            if j + 1 < k:
                edges.append((nodes[i, j], nodes[i, j + 1]))
    keep = np.sort(rng.choice(len(edges), size=n_segments, replace=False))
    segs = []
    for n, e in enumerate(keep):
        a, b = edges[e]
        d = b - a
        normal = np.array([-d[1], d[0]]) / np.hypot(*d)
        mid = (a + b) / 2 + normal * rng.uniform(-bend_m, bend_m)
        segs.append(RoadSegment(f"s{n:04d}", np.array([a, mid, b])))
    return segs


def nested_historical_sets(segment_ids, fractions, seed: int = 0) -> list[frozenset]:
    """Growing historical subsets, one per fraction (monotone growth)."""
    ids = sorted(segment_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    return [frozenset(ids[i] for i in order[:round(f * len(ids))]) for f in fractions]


# -- rasterisation -----------------------------------------------------------

def _bresenham(c0: int, r0: int, c1: int, r1: int):
    dc, dr = abs(c1 - c0), -abs(r1 - r0)
    sc = 1 if c0 < c1 else -1
    sr = 1 if r0 < r1 else -1
    err = dc + dr
    cols, rows = [], []
    while True:
        cols.append(c0)
        rows.append(r0)
        if c0 == c1 and r0 == r1:
            break
        e2 = 2 * err
        if e2 >= dr:
            err += dr
            c0 += sc
        if e2 <= dc:
            err += dc
            r0 += sr
    return cols, rows


def draw_polyline(canvas: np.ndarray, transform: AffineTransform, xy: np.ndarray, value: int,
                  width_px: int = 1) -> None:
    """Hard-edged polyline in world coordinates, clipped to the canvas."""
    col, row = transform.world_to_pixel(xy[:, 0], xy[:, 1])
    ci = np.floor(col + 0.5).astype(int)
    ri = np.floor(row + 0.5).astype(int)
    lo, hi = -((width_px - 1) // 2), width_px // 2
    h, w = canvas.shape
    for k in range(len(ci) - 1):
        cols, rows = _bresenham(ci[k], ri[k], ci[k + 1], ri[k + 1])
        cols, rows = np.array(cols), np.array(rows)
        for dr in range(lo, hi + 1):
            for dc in range(lo, hi + 1):
                cc, rr = cols + dc, rows + dr
                ok = (cc >= 0) & (cc < w) & (rr >= 0) & (rr < h)
                canvas[rr[ok], cc[ok]] = value


def offset_polyline(xy: np.ndarray, dist: float, miter_limit: float = 4.0) -> np.ndarray:
    """Parallel polyline at signed distance ``dist`` (positive = left)."""
    d = np.diff(xy, axis=0)
    n = np.column_stack([-d[:, 1], d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
    out = np.empty_like(xy)
    out[0] = xy[0] + dist * n[0]
    out[-1] = xy[-1] + dist * n[-1]
    for i in range(1, len(xy) - 1):
        m = n[i - 1] + n[i]
        norm = np.hypot(*m)
        if norm < 1e-12:
            out[i] = xy[i] + dist * n[i]
            continue
        m /= norm
        scale = min(1.0 / max(float(np.dot(m, n[i])), 1e-12), miter_limit)
        out[i] = xy[i] + dist * scale * m
    return out


def dash_pieces(xy: np.ndarray, on_m: float, off_m: float) -> list[np.ndarray]:
    """Split a polyline into the 'on' pieces of a dash pattern."""
    line = LineString(xy)
    L, period = line.length, on_m + off_m
    pieces, s = [], 0.0
    while s < L:
        e = min(s + on_m, L)
        coords = np.asarray(substring(line, s, e).coords)
        if len(coords) >= 2:
            pieces.append(coords)
        s += period
    return pieces


def _contour_like(rng, bounds, step_m: float = 10.0) -> np.ndarray:
    minx, miny, maxx, maxy = bounds
    span = max(maxx - minx, maxy - miny)
    theta = rng.uniform(0, np.pi)
    cx, cy = rng.uniform(minx, maxx), rng.uniform(miny, maxy)
    t = np.arange(-span, span + step_m, step_m)
    amp = rng.uniform(0.02, 0.08) * span
    freq = rng.uniform(1.0, 3.0) * 2 * np.pi / span
    phase = rng.uniform(0, 2 * np.pi)
    wobble = amp * np.sin(freq * t + phase)
    u = np.array([np.cos(theta), np.sin(theta)])
    v = np.array([-u[1], u[0]])
    return np.array([cx, cy]) + t[:, None] * u + wobble[:, None] * v


def scenario_bounds(segments, margin_m: float):
    allv = np.concatenate([s.vertices for s in segments])
    return (allv[:, 0].min() - margin_m, allv[:, 1].min() - margin_m,
            allv[:, 0].max() + margin_m, allv[:, 1].max() + margin_m)


def raster_grid(bounds, pixel_size_m: float):
    """Transform and shape of a north-up grid whose pixel centres sit on
    multiples of ``pixel_size_m`` and cover ``bounds``."""
    minx, miny, maxx, maxy = bounds
    ps = pixel_size_m
    x0 = math.floor(minx / ps) * ps
    y0 = math.ceil(maxy / ps) * ps
    width = int(math.ceil((maxx - x0) / ps)) + 1
    height = int(math.ceil((y0 - miny) / ps)) + 1
    return AffineTransform(ps, 0.0, 0.0, -ps, x0, y0), (height, width)


def render(scenario: SyntheticScenario):
    """Render the scenario; returns ``(raster, truth)`` with truth = id -> bool."""
    style = scenario.style
    rng = np.random.default_rng(scenario.seed)
    bounds = scenario_bounds(scenario.segments, scenario.margin_m)
    transform, shape = raster_grid(bounds, scenario.pixel_size_m)
    canvas = np.full(shape, style.background_gray, dtype=np.uint8)
    for _ in range(style.distractors):
        draw_polyline(canvas, transform, _contour_like(rng, bounds), DISTRACTOR_GRAY, style.line_width_px)
    shift = np.asarray(style.offset_vec, dtype=float)
    half = style.casing_gap_m / 2.0
    for seg in sorted(scenario.segments, key=lambda s: s.id):
        if seg.id not in scenario.historical_ids:
            continue
        base = seg.vertices + shift
        sides = (0.0,) if half == 0 else (-half, half)
        for side in sides:
            line = offset_polyline(base, side) if side else base
            pieces = dash_pieces(line, *style.dash_pattern) if style.dash_pattern else [line]
            for p in pieces:
                draw_polyline(canvas, transform, p, style.ink_gray, style.line_width_px)
    if style.noise_sigma > 0:
        noisy = canvas.astype(float) + rng.normal(0.0, style.noise_sigma, canvas.shape)
        canvas = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    raster = GeoRaster(canvas, transform, sheet_id=scenario.sheet_id, epoch_year=scenario.year)
    truth = {s.id: s.id in scenario.historical_ids for s in scenario.segments}
    return raster, truth


def split_sheets(raster: GeoRaster, n: int, prefix: str = "sheet") -> list[GeoRaster]:
    """Cut a raster into ``n`` vertical strips, each its own map sheet."""
    cuts = np.linspace(0, raster.width, n + 1).round().astype(int)
    out = []
    for i in range(n):
        c0, c1 = cuts[i], cuts[i + 1]
        out.append(GeoRaster(raster.pixels[:, c0:c1], raster.transform.translated(c0, 0),
                             sheet_id=f"{prefix}{i}", epoch_year=raster.epoch_year))
    return out


def render_bua(scenario: SyntheticScenario, year: int, cell_m: float = 250.0) -> GeoRaster:
    """Binary built-up grid: a cell is built if a historical road crosses it."""
    bounds = scenario_bounds(scenario.segments, scenario.margin_m)
    transform, (h, w) = raster_grid(bounds, cell_m)
    lines = [LineString(s.vertices) for s in scenario.segments if s.id in scenario.historical_ids]
    grid = np.zeros((h, w), dtype=np.uint8)
    if lines:
        union = shapely.union_all(lines)
        shapely.prepare(union)
        rows, cols = np.mgrid[0:h, 0:w]
        x, y = transform.pixel_to_world(cols.ravel(), rows.ravel())
        hw = cell_m / 2.0
        boxes = shapely.box(x - hw, y - hw, x + hw, y + hw)
        grid.ravel()[shapely.intersects(union, boxes)] = 255
    return GeoRaster(grid, transform, sheet_id=f"bua_{year}", epoch_year=year)


# -- scenario files ----------------------------------------------------------

def style_from_dict(d: dict) -> SymbolStyle:
    d = dict(d)
    if d.get("dash_pattern") is not None:
        d["dash_pattern"] = tuple(d["dash_pattern"])
    if "offset_vec" in d:
        d["offset_vec"] = tuple(d["offset_vec"])
    return SymbolStyle(**d)


def scenarios_from_dict(doc: dict, base_dir=None, read_roads=None) -> tuple[list[RoadSegment], list[SyntheticScenario]]:
    """Build the road network and one scenario per epoch from a JSON document.

    Keys: ``network`` (grid generator arguments) or ``roads`` (GeoJSON path),
    ``style``, ``pixel_size_m``, ``seed``, ``sheet_id``, and either a single
    ``year`` with ``historical_fraction``/``historical_ids`` or a list of
    ``epochs`` with the same per-epoch keys. Fractions across epochs produce
    nested (monotonically growing) historical sets.
    """
    if "roads" in doc:
        if read_roads is None:
            from .io import read_segments as read_roads
        path = Path(doc["roads"])
        segments = read_roads(path if path.is_absolute() or base_dir is None else Path(base_dir) / path)
    else:
        segments = grid_network(**doc.get("network", {}))
    style = style_from_dict(doc.get("style", {}))
    seed = int(doc.get("seed", 0))
    epochs = doc.get("epochs") or [{k: doc[k] for k in ("year", "historical_fraction", "historical_ids") if k in doc}]
    ids = [s.id for s in segments]
    fractions = [e.get("historical_fraction", 0.0) for e in epochs]
    nested = nested_historical_sets(ids, fractions, seed)
    scenarios = []
    for i, e in enumerate(epochs):
        hist = frozenset(e["historical_ids"]) if "historical_ids" in e else nested[i]
        ep_style = style_from_dict({**style.__dict__, **e["style"]}) if "style" in e else style
        scenarios.append(SyntheticScenario(
            segments=tuple(segments), historical_ids=hist, style=ep_style,
            pixel_size_m=float(doc.get("pixel_size_m", 5.0)), seed=seed + i,
            year=int(e.get("year", 1900)), sheet_id=str(doc.get("sheet_id", "synthetic")),
            margin_m=float(doc.get("margin_m", 100.0)),
        ))
    return segments, scenarios


def fixture_scenario_path() -> Path:
    """Bundled 20-segment single-sheet scenario used by tests and demos."""
    return Path(str(files("histroads") / "data" / "synthetic20.json"))


def load_scenario_file(path):
    path = Path(path)
    return scenarios_from_dict(json.loads(path.read_text()), base_dir=path.parent)


# -- parameter sweeps --------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    csd_m: float
    csl_m: float
    target_h: int
    target_w: int
    precision: float
    recall: float
    f1: float
    historical_ids: frozenset


def sweep_params(csd_m=25.0, csl_m=100.0, target_h=20, target_w=None, spacing_m=5.0) -> SamplingParams:
    """Sampling parameters for one sweep cell.

    Without an explicit width the sample spacing stays at ``spacing_m``, so
    the axial image width follows the cross-section length.
    """
    w = int(target_w) if target_w is not None else max(2, int(round(csl_m / spacing_m)))
    return SamplingParams(csd_m=float(csd_m), csl_m=float(csl_m), n_samples=w, target_h=int(target_h))


def run_pipeline_on_raster(segments, raster, params: SamplingParams, global_seed: int = 0):
    """ROI plus per-raster clustering; returns the set of historical ids."""
    from .ckmeans import cluster_by_scope
    from .roi import compute_roi

    records = [compute_roi(s, raster, params, global_seed) for s in segments]
    labels, _ = cluster_by_scope(records, "per_study_area")
    return frozenset(l.segment_id for l in labels if l.historical), records


def sweep(scenario: SyntheticScenario, grid, global_seed: int = 0) -> list[SweepRow]:
    """Run the detection pipeline for each parameter set against ground truth.

    ``grid`` is an iterable of dicts with any of ``csd_m``, ``csl_m``,
    ``target_h``, ``target_w``.
    """
    from .metrics import confusion, prf

    raster, truth = render(scenario)
    ids = sorted(truth)
    ref = [truth[i] for i in ids]
    rows = []
    for cell in grid:
        params = sweep_params(**cell)
        hist, _ = run_pipeline_on_raster(scenario.segments, raster, params, global_seed)
        p, r, f1 = prf(confusion([i in hist for i in ids], ref), "instance")
        rows.append(SweepRow(params.csd_m, params.csl_m, params.target_h, params.target_w, p, r, f1, hist))
    return rows


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)
