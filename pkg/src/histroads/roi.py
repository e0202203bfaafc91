"""Axial images and the road overlap indicator (ROI).

For each segment the colours under every cross-section are stacked into an
``h x w`` axial image (rows follow the road, columns run across it). The
image is brought to a fixed height, converted to gray, differentiated
across columns, and the ROI is the area under the absolute column-summed
gradient curve.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import RoadSegment, SamplingParams, cross_section_samples
from .raster import GeoRaster, encode_pnm

DEFAULT_OOB_LIMIT = 0.5
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AxialImage:
    values: np.ndarray      # (h, w, 3) uint8
    oob_mask: np.ndarray    # (h, w) bool

    @property
    def h(self) -> int:
        return self.values.shape[0]

    @property
    def w(self) -> int:
        return self.values.shape[1]

    @property
    def oob_fraction(self) -> float:
        return float(self.oob_mask.mean())


@dataclass(frozen=True)
class ROIRecord:
    segment_id: str
    sheet_id: str | None
    epoch_year: int
    roi: float
    n_cross_sections: int
    oob_fraction: float
    valid: bool


def build_axial_image(segment: RoadSegment, raster: GeoRaster, params: SamplingParams | None = None) -> AxialImage:
    params = params or SamplingParams()
    _, _, _, samples = cross_section_samples(segment, params)
    values, oob = raster.sample_many(samples)
    return AxialImage(values, oob)


def to_gray(rgb) -> np.ndarray:
    """Rec. 601 luma of an ``(..., 3)`` array."""
    return np.asarray(rgb, dtype=float) @ LUMA


def select_rows(h: int, target_h: int, seed: int) -> np.ndarray:
    """Row indices mapping an ``h``-row image onto ``target_h`` rows.

    Taller images keep a sorted random subset of rows; shorter ones are
    centred and mirrored outward with the edge row repeated
    (``... r1 r0 | r0 r1 ... | r_last ...``).
    """
    if h > target_h:
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(h, size=target_h, replace=False))
    if h == target_h:
        return np.arange(h)
    top = (target_h - h) // 2
    j = np.arange(target_h) - top
    period = 2 * h
    m = np.mod(j, period)
    return np.where(m < h, m, period - 1 - m)


def regularize(img: AxialImage, target_h: int = 20, seed: int = 0) -> np.ndarray:
    """Resample rows to ``target_h`` and convert to gray, ``(target_h, w)`` float."""
    rows = select_rows(img.h, target_h, seed)
    return to_gray(img.values[rows])


def column_curve(reg: np.ndarray) -> np.ndarray:
    """Column sums of the across-road gradient.

    Central differences inside, one-sided at the two edge columns.
    """
    reg = np.asarray(reg, dtype=float)
    grad = np.gradient(reg, axis=1)
    return grad.sum(axis=0)


def roi(reg: np.ndarray) -> float:
    return float(np.abs(column_curve(reg)).sum())


def segment_seed(global_seed: int, segment_id: str) -> int:
    """Stable 64-bit seed for one segment, independent of scheduling."""
    digest = hashlib.blake2b(f"{global_seed}\x1f{segment_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def compute_roi(segment: RoadSegment, raster: GeoRaster, params: SamplingParams | None = None,
                global_seed: int = 0, oob_limit: float = DEFAULT_OOB_LIMIT) -> ROIRecord:
    params = params or SamplingParams()
    img = build_axial_image(segment, raster, params)
    reg = regularize(img, params.target_h, segment_seed(global_seed, segment.id))
    oob = img.oob_fraction
    return ROIRecord(
        segment_id=segment.id,
        sheet_id=raster.sheet_id,
        epoch_year=raster.epoch_year,
        roi=roi(reg),
        n_cross_sections=img.h,
        oob_fraction=oob,
        valid=oob <= oob_limit,
    )


def dump_debug(segment: RoadSegment, raster: GeoRaster, outdir, params: SamplingParams | None = None,
               global_seed: int = 0) -> None:
    """Write ``<id>_axial.pgm``, ``<id>_regularized.pgm`` and ``<id>_curve.csv``."""
    params = params or SamplingParams()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    img = build_axial_image(segment, raster, params)
    reg = regularize(img, params.target_h, segment_seed(global_seed, segment.id))
    gray = np.clip(np.rint(to_gray(img.values)), 0, 255).astype(np.uint8)
    (outdir / f"{segment.id}_axial.pgm").write_bytes(encode_pnm(gray))
    (outdir / f"{segment.id}_regularized.pgm").write_bytes(
        encode_pnm(np.clip(np.rint(reg), 0, 255).astype(np.uint8)))
    curve = column_curve(reg)
    with open(outdir / f"{segment.id}_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["column", "offset_m", "gradient_sum"])
        for c, (off, val) in enumerate(zip(params.offsets(), curve)):
            w.writerow([c, repr(float(off)), repr(float(val))])
