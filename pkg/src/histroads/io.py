"""GeoJSON and CSV serialisation of segments, footprints and stage outputs."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .geometry import InvalidGeometryError, RoadSegment, SheetFootprint
from .roi import ROIRecord


class DataFormatError(ValueError):
    """Input data that cannot be parsed."""


def _load_features(path) -> list[dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"cannot read GeoJSON {path}: {exc}") from None
    if doc.get("type") != "FeatureCollection" or not isinstance(doc.get("features"), list):
        raise DataFormatError(f"{path}: expected a GeoJSON FeatureCollection")
    return doc["features"]


def read_segments(path) -> list[RoadSegment]:
    """Road segments from LineString features with a string ``id`` property."""
    segments, seen = [], set()
    for i, f in enumerate(_load_features(path)):
        geom = f.get("geometry") or {}
        props = f.get("properties") or {}
        if geom.get("type") != "LineString":
            raise DataFormatError(f"{path}: feature {i} is not a LineString")
        sid = props.get("id")
        if not isinstance(sid, str) or not sid:
            raise DataFormatError(f"{path}: feature {i} lacks a string 'id' property")
        if sid in seen:
            raise DataFormatError(f"{path}: duplicate segment id {sid!r}")
        seen.add(sid)
        try:
            segments.append(RoadSegment(sid, np.asarray(geom["coordinates"], dtype=float)[:, :2]))
        except (InvalidGeometryError, KeyError, IndexError, ValueError) as exc:
            raise DataFormatError(f"{path}: segment {sid!r}: {exc}") from None
    return segments


def read_footprints(path) -> list[SheetFootprint]:
    out = []
    for i, f in enumerate(_load_features(path)):
        geom = f.get("geometry") or {}
        props = f.get("properties") or {}
        if geom.get("type") != "Polygon":
            raise DataFormatError(f"{path}: feature {i} is not a Polygon")
        try:
            out.append(SheetFootprint(str(props["sheet_id"]), np.asarray(geom["coordinates"][0], dtype=float),
                                      int(props["year"])))
        except (KeyError, ValueError, InvalidGeometryError) as exc:
            raise DataFormatError(f"{path}: footprint {i}: {exc}") from None
    return out


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def write_segments_geojson(path, segments, properties: dict) -> None:
    """One LineString feature per segment, in the given order.

    ``properties`` maps segment id to extra feature properties.
    """
    features = []
    for s in segments:
        props = {"id": s.id, "length_m": s.length_m}
        props.update(properties.get(s.id, {}))
        features.append({
            "type": "Feature",
            "properties": {k: _jsonable(v) for k, v in props.items()},
            "geometry": {"type": "LineString", "coordinates": s.vertices.tolist()},
        })
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v)) if math.isfinite(v) else ""
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([cell(v) for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


ROI_COLUMNS = ["segment_id", "sheet_id", "epoch_year", "roi", "n_cross_sections", "oob_fraction", "valid"]


def write_roi_csv(path, records) -> None:
    write_csv(path, ROI_COLUMNS, ([r.segment_id, r.sheet_id, r.epoch_year, r.roi, r.n_cross_sections,
                                   r.oob_fraction, r.valid] for r in records))


def read_roi_csv(path) -> list[ROIRecord]:
    out = []
    for row in read_csv(path):
        try:
            out.append(ROIRecord(
                segment_id=row["segment_id"],
                sheet_id=row["sheet_id"] or None,
                epoch_year=int(row["epoch_year"]),
                roi=float(row["roi"]) if row["roi"] else float("nan"),
                n_cross_sections=int(row["n_cross_sections"]),
                oob_fraction=float(row["oob_fraction"]),
                valid=row["valid"] == "1",
            ))
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{path}: bad ROI row: {exc}") from None
    return out


LABEL_COLUMNS = ["segment_id", "epoch_year", "sheet_id", "cluster_scope", "group", "status",
                 "historical", "cluster", "silhouette", "roi"]


def write_labels_csv(path, labels, scope: str, roi_by_id: dict) -> None:
    write_csv(path, LABEL_COLUMNS, ([l.segment_id, l.epoch_year, l.sheet_id, scope, l.group, l.status,
                                     l.historical, l.cluster, l.silhouette, roi_by_id.get(l.segment_id)]
                                    for l in labels))


def read_labels_csv(path) -> list[dict]:
    rows = read_csv(path)
    for r in rows:
        r["epoch_year"] = int(r["epoch_year"])
        r["historical"] = None if r["historical"] == "" else r["historical"] == "1"
        r["roi"] = float(r["roi"]) if r["roi"] else float("nan")
        r["silhouette"] = float(r["silhouette"]) if r["silhouette"] else float("nan")
    return rows
