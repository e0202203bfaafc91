"""Georeferenced rasters: world files, binary PNM I/O and pixel sampling.

World files follow the ESRI convention: six lines A, D, B, E, C, F where
(C, F) is the centre of the top-left pixel and

    x = A*col + B*row + C
    y = D*col + E*row + F
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class RasterFormatError(ValueError):
    """Malformed world file, PNM payload or manifest."""


OUT_OF_BOUNDS = None
"""Returned by :func:`sample_rgb` for points that miss the raster."""

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class AffineTransform:
    a: float
    d: float
    b: float
    e: float
    c: float
    f: float

    def __post_init__(self):
        for name in ("a", "d", "b", "e", "c", "f"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def determinant(self) -> float:
        return self.a * self.e - self.b * self.d

    def validate(self) -> "AffineTransform":
        if self.determinant == 0:
            raise RasterFormatError("singular world transform (a*e - b*d == 0)")
        return self

    def pixel_to_world(self, col, row):
        col = np.asarray(col, dtype=float)
        row = np.asarray(row, dtype=float)
        return self.a * col + self.b * row + self.c, self.d * col + self.e * row + self.f

    def world_to_pixel(self, x, y):
        dx = np.asarray(x, dtype=float) - self.c
        dy = np.asarray(y, dtype=float) - self.f
        det = self.determinant
        col = (self.e * dx - self.b * dy) / det
        row = (self.a * dy - self.d * dx) / det
        return col, row

    def translated(self, dcol: float, drow: float) -> "AffineTransform":
        """Transform of a window whose top-left pixel is (dcol, drow) here."""
        c, f = self.pixel_to_world(dcol, drow)
        return AffineTransform(self.a, self.d, self.b, self.e, float(c), float(f))


def world_to_pixel(transform: AffineTransform, p) -> tuple[float, float]:
    col, row = transform.world_to_pixel(p[0], p[1])
    return float(col), float(row)


def pixel_to_world(transform: AffineTransform, col: float, row: float) -> tuple[float, float]:
    x, y = transform.pixel_to_world(col, row)
    return float(x), float(y)


def parse_world_file(text: str) -> AffineTransform:
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if len(lines) != 6:
        raise RasterFormatError(f"world file needs 6 lines, found {len(lines)}")
    values = []
    for lineno, ln in enumerate(lines, start=1):
        if not _DECIMAL.match(ln):
            raise RasterFormatError(f"world file line {lineno}: not a decimal number: {ln!r}")
        values.append(float(ln))
    return AffineTransform(*values).validate()


def format_world_file(t: AffineTransform) -> str:
    return "".join(f"{v!r}\n" for v in (t.a, t.d, t.b, t.e, t.c, t.f))


@dataclass(frozen=True)
class GeoRaster:
    """8-bit raster with its world transform.

    ``pixels`` is ``(height, width)`` for gray or ``(height, width, 3)`` for RGB.
    """

    pixels: np.ndarray
    transform: AffineTransform
    sheet_id: str = ""
    epoch_year: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise RasterFormatError("raster samples must be uint8")
        if not (px.ndim == 2 or (px.ndim == 3 and px.shape[2] == 3)):
            raise RasterFormatError(f"unsupported raster shape {px.shape}")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        self.transform.validate()

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def bands(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    def footprint(self) -> np.ndarray:
        """Outer pixel-edge ring in world coordinates (closed, 5 points)."""
        cols = np.array([-0.5, self.width - 0.5, self.width - 0.5, -0.5, -0.5])
        rows = np.array([-0.5, -0.5, self.height - 0.5, self.height - 0.5, -0.5])
        x, y = self.transform.pixel_to_world(cols, rows)
        return np.column_stack([x, y])

    def sample_many(self, points: np.ndarray):
        """Nearest-pixel RGB for ``(..., 2)`` world points.

        Returns an ``(..., 3)`` uint8 array (out-of-bounds cells set to 255)
        and a boolean out-of-bounds mask.
        """
        pts = np.asarray(points, dtype=float)
        col, row = self.transform.world_to_pixel(pts[..., 0], pts[..., 1])
        ci = np.floor(col + 0.5)
        ri = np.floor(row + 0.5)
        oob = (ci < 0) | (ci >= self.width) | (ri < 0) | (ri >= self.height) | ~np.isfinite(ci + ri)
        ci = np.where(oob, 0, ci).astype(np.intp)
        ri = np.where(oob, 0, ri).astype(np.intp)
        vals = self.pixels[ri, ci]
        if self.bands == 1:
            vals = np.repeat(vals[..., None], 3, axis=-1)
        vals = np.where(oob[..., None], np.uint8(255), vals).astype(np.uint8)
        return vals, oob


def sample_rgb(raster: GeoRaster, p):
    """RGB triple at the pixel nearest to ``p`` or :data:`OUT_OF_BOUNDS`."""
    vals, oob = raster.sample_many(np.asarray(p, dtype=float)[None, :])
    if oob[0]:
        return OUT_OF_BOUNDS
    return tuple(int(v) for v in vals[0])


# -- PNM --------------------------------------------------------------------

def _pnm_tokens(data: bytes, count: int):
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise RasterFormatError("truncated PNM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the payload
    if pos >= n or not data[pos:pos + 1].isspace():
        raise RasterFormatError("truncated PNM header")
    return tokens, pos + 1


def decode_pnm(data: bytes) -> np.ndarray:
    tokens, offset = _pnm_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise RasterFormatError(f"unsupported PNM magic {magic!r}; expected P5 or P6")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise RasterFormatError(f"non-integer PNM header field: {exc}") from None
    if width <= 0 or height <= 0:
        raise RasterFormatError("PNM dimensions must be positive")
    if maxval != 255:
        raise RasterFormatError(f"PNM maxval must be 255, got {maxval}")
    bands = 1 if magic == b"P5" else 3
    expected = width * height * bands
    payload = data[offset:offset + expected]
    if len(payload) < expected:
        raise RasterFormatError(f"truncated PNM payload: expected {expected} bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width) if bands == 1 else (height, width, 3)
    return arr.reshape(shape).copy()


def encode_pnm(pixels: np.ndarray) -> bytes:
    px = np.ascontiguousarray(pixels, dtype=np.uint8)
    magic = b"P5" if px.ndim == 2 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, px.shape[1], px.shape[0])
    return header + px.tobytes()


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image  # optional dependency

        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im, dtype=np.uint8).copy()
    return decode_pnm(path.read_bytes())


def load_raster(image_path, world_path, sheet_id: str = "", epoch_year: int = 0) -> GeoRaster:
    pixels = read_image(image_path)
    transform = parse_world_file(Path(world_path).read_text())
    return GeoRaster(pixels, transform, sheet_id=sheet_id, epoch_year=epoch_year)


def save_raster(raster: GeoRaster, image_path, world_path=None) -> None:
    """Write the image as PGM/PPM plus its world file.

    The world file defaults to the image path with a ``.wld`` suffix.
    """
    image_path = Path(image_path)
    image_path.write_bytes(encode_pnm(raster.pixels))
    world_path = Path(world_path) if world_path else image_path.with_suffix(".wld")
    world_path.write_text(format_world_file(raster.transform))


# -- built-up area grids -----------------------------------------------------

BUA_CELL_M = 250.0


def as_bua_grid(raster: GeoRaster, cell_m: float = BUA_CELL_M) -> GeoRaster:
    """Validate a raster as a binary, axis-parallel built-up-area grid."""
    t = raster.transform
    if raster.bands != 1:
        raise RasterFormatError("BUA grid must be single-band")
    if t.b != 0 or t.d != 0:
        raise RasterFormatError("BUA grid must be axis-parallel")
    if abs(abs(t.a) - cell_m) > 1e-6 or abs(abs(t.e) - cell_m) > 1e-6:
        raise RasterFormatError(f"BUA grid cell size must be {cell_m} m")
    if not np.all(np.isin(raster.pixels, (0, 255))):
        raise RasterFormatError("BUA grid values must be 0 or 255")
    return raster


# -- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class SheetEntry:
    sheet_id: str
    image: Path
    world: Path
    year: int
    footprint: object = None  # ring coordinates, GeoJSON path, or None (raster extent)


def read_manifest(path) -> list[SheetEntry]:
    """Parse a raster manifest.

    Format::

        {"sheets": [{"sheet_id": "A", "image": "a.ppm", "world": "a.wld",
                     "year": 1900, "footprint": [[x, y], ...]}]}

    Relative paths resolve against the manifest's directory. ``footprint``
    may be an inline ring, a GeoJSON file path, or omitted.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        sheets = doc["sheets"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise RasterFormatError(f"bad manifest {path}: {exc}") from None
    base = path.parent
    entries, seen = [], set()
    for i, s in enumerate(sheets):
        try:
            sid = str(s["sheet_id"])
            year = int(s["year"])
            fp = s.get("footprint")
            if isinstance(fp, str):
                fp = base / fp
            entry = SheetEntry(sid, base / s["image"], base / s["world"], year, fp)
        except (KeyError, TypeError, ValueError) as exc:
            raise RasterFormatError(f"manifest entry {i}: {exc}") from None
        if (sid, year) in seen:
            raise RasterFormatError(f"duplicate manifest entry for sheet {sid!r} year {year}")
        seen.add((sid, year))
        entries.append(entry)
    return entries


def write_manifest(entries, path) -> None:
    path = Path(path)
    sheets = []
    for e in entries:
        rec = {
            "sheet_id": e.sheet_id,
            "image": str(Path(e.image).relative_to(path.parent)) if Path(e.image).is_absolute() else str(e.image),
            "world": str(Path(e.world).relative_to(path.parent)) if Path(e.world).is_absolute() else str(e.world),
            "year": e.year,
        }
        if e.footprint is not None:
            fp = e.footprint
            rec["footprint"] = [[float(x), float(y)] for x, y in np.asarray(fp)] if not isinstance(fp, (str, Path)) else str(fp)
        sheets.append(rec)
    path.write_text(json.dumps({"sheets": sheets}, indent=1) + "\n")
