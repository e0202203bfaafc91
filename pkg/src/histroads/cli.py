"""Batch pipeline command line.

Subcommands: roi, cluster, evaluate, temporal, synth, sweep, pipeline.
Settings come from a ``key = value`` config file (``--config``) with flag
overrides. Exit codes: 0 success, 1 configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .ckmeans import cluster_by_scope
from .geometry import SamplingParams, SheetFootprint, assign_segment_to_sheet, buffer_segment, stratify_segments
from .io import (DataFormatError, read_footprints, read_labels_csv, read_roi_csv, read_segments, write_csv,
                 write_labels_csv, write_roi_csv, write_segments_geojson)
from .metrics import EvalRecord, grouped_report, roc, roc_svg, f1_threshold_svg, write_report_csv
from .raster import RasterFormatError, load_raster, read_manifest, save_raster, write_manifest, SheetEntry
from .reference import (DEFAULT_THRESHOLDS, LabelFormatError, built_up_fraction, label_from_fraction,
                        parse_manual_labels, select_bua_epoch)
from .roi import ROIRecord, compute_roi
from .temporal import (cross_tabulate, historical_km, length_change, roi_bivariate_histogram, histogram_svg,
                       write_histogram_csv, write_transitions_csv)

log = logging.getLogger("histroads")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    roads: Path | None = None
    manifest: Path | None = None
    bua_dir: Path | None = None
    labels: Path | None = None
    output: Path | None = None
    scenario: Path | None = None
    grid: Path | None = None
    csd: float = 25.0
    csl: float = 100.0
    target_h: int = 20
    target_w: int = 20
    scope: str = "sheet"
    thresholds: tuple = DEFAULT_THRESHOLDS
    percentile: float = 0.90
    buffer_m: float = 125.0
    oob_limit: float = 0.5
    seed: int = 0
    workers: int = 1
    study_area: str = "study_area"
    svg: bool = False

    PATHS = ("roads", "manifest", "bua_dir", "labels", "output", "scenario", "grid")

    @property
    def params(self) -> SamplingParams:
        return SamplingParams(csd_m=self.csd, csl_m=self.csl, n_samples=self.target_w, target_h=self.target_h)

    @property
    def cluster_scope(self) -> str:
        return {"sheet": "per_sheet", "area": "per_study_area"}[self.scope]

    def require(self, *names):
        for n in names:
            v = getattr(self, n)
            if v is None:
                raise ConfigError(f"missing required setting '{n}'")
            if n in self.PATHS and n != "output" and not Path(v).exists():
                raise ConfigError(f"{n}: {v} does not exist")
        if "output" in names:
            try:
                self.output.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigError(f"output directory not writable: {exc}") from None


def _coerce(name: str, raw: str, base: Path):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown setting '{name}'")
    try:
        if name in RunConfig.PATHS:
            p = Path(raw).expanduser()
            return p if p.is_absolute() else base / p
        if name == "thresholds":
            return tuple(float(t) for t in raw.replace(",", " ").split())
        if name == "svg":
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if name in ("target_h", "target_w", "seed", "workers"):
            return int(raw)
        if name in ("csd", "csl", "percentile", "buffer_m", "oob_limit"):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"invalid value for '{name}': {raw!r}") from None


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        text = path.read_text()
        if not text.lstrip().startswith("["):
            text = "[run]\n" + text
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            for k, v in parser[section].items():
                setattr(cfg, k, _coerce(k, v, path.parent))
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(cfg, k, _coerce(k, str(v), Path.cwd()) if isinstance(v, str) else v)
    if cfg.scope not in ("sheet", "area"):
        raise ConfigError("scope must be 'sheet' or 'area'")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    try:
        cfg.params
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


# -- roi -----------------------------------------------------------------------

_WORK: dict = {}


def _init_worker(segments, rasters, params, seed, oob_limit):
    _WORK.update(segments=segments, rasters=rasters, params=params, seed=seed, oob_limit=oob_limit)


def _roi_task(task):
    i, key = task
    seg = _WORK["segments"][i]
    return compute_roi(seg, _WORK["rasters"][key], _WORK["params"], _WORK["seed"], _WORK["oob_limit"])


def _footprint(entry: SheetEntry, raster) -> SheetFootprint:
    fp = entry.footprint
    if fp is None:
        ring = raster.footprint()
    elif isinstance(fp, (str, Path)):
        matches = [f for f in read_footprints(fp) if f.sheet_id == entry.sheet_id and f.epoch_year == entry.year]
        if not matches:
            raise DataFormatError(f"no footprint for sheet {entry.sheet_id!r} ({entry.year}) in {fp}")
        return matches[0]
    else:
        ring = np.asarray(fp, dtype=float)
    return SheetFootprint(entry.sheet_id, ring, entry.year)


def load_epochs(manifest):
    """Rasters and footprints grouped by year: {year: [(raster, footprint)]}."""
    epochs: dict[int, list] = {}
    for e in read_manifest(manifest):
        raster = load_raster(e.image, e.world, sheet_id=e.sheet_id, epoch_year=e.year)
        epochs.setdefault(e.year, []).append((raster, _footprint(e, raster)))
    return epochs


def compute_epoch_rois(segments, sheets, params, seed, oob_limit, workers=1) -> list[ROIRecord]:
    """ROI record per segment (input order) for one epoch's sheets."""
    footprints = [fp for _, fp in sheets]
    rasters = {r.sheet_id: r for r, _ in sheets}
    year = sheets[0][0].epoch_year
    assigned = [assign_segment_to_sheet(s, footprints) for s in segments]
    tasks = [(i, sid) for i, sid in enumerate(assigned) if sid is not None]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(segments, rasters, params, seed, oob_limit)) as ex:
            results = list(ex.map(_roi_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        _init_worker(segments, rasters, params, seed, oob_limit)
        results = [_roi_task(t) for t in tasks]
    by_index = dict(zip((i for i, _ in tasks), results))
    out = []
    for i, s in enumerate(segments):
        if i in by_index:
            out.append(by_index[i])
        else:
            out.append(ROIRecord(s.id, None, year, float("nan"), 0, 1.0, False))
    return out


def _roi_props(r: ROIRecord) -> dict:
    return {"roi": r.roi, "sheet_id": r.sheet_id, "epoch": r.epoch_year, "valid": r.valid,
            "n_cross_sections": r.n_cross_sections, "oob_fraction": r.oob_fraction}


def cmd_roi(cfg: RunConfig) -> dict:
    cfg.require("roads", "manifest", "output")
    segments = sorted(read_segments(cfg.roads), key=lambda s: s.id)
    epochs = load_epochs(cfg.manifest)
    summary = {}
    for year in sorted(epochs):
        records = compute_epoch_rois(segments, epochs[year], cfg.params, cfg.seed, cfg.oob_limit, cfg.workers)
        write_roi_csv(cfg.output / f"roi_{year}.csv", records)
        write_segments_geojson(cfg.output / f"roi_{year}.geojson", segments,
                               {r.segment_id: _roi_props(r) for r in records})
        n_invalid = sum(not r.valid for r in records)
        if n_invalid:
            log.warning("%d: %d of %d segments invalid or unassigned", year, n_invalid, len(records))
        summary[year] = {"records": len(records), "invalid": n_invalid}
    return summary


# -- cluster -------------------------------------------------------------------

def _roi_files(cfg) -> dict[int, Path]:
    files = {int(p.stem.split("_")[1]): p for p in cfg.output.glob("roi_*.csv")}
    if not files:
        raise ConfigError(f"no roi_<year>.csv in {cfg.output}; run 'roi' first")
    return dict(sorted(files.items()))


def cmd_cluster(cfg: RunConfig) -> dict:
    cfg.require("roads", "output")
    segments = sorted(read_segments(cfg.roads), key=lambda s: s.id)
    summary, skipped_rows = {}, []
    for year, path in _roi_files(cfg).items():
        records = read_roi_csv(path)
        labels, skipped = cluster_by_scope(records, cfg.cluster_scope)
        roi_by_id = {r.segment_id: r.roi for r in records}
        write_labels_csv(cfg.output / f"labels_{year}.csv", labels, cfg.cluster_scope, roi_by_id)
        props = {l.segment_id: {"roi": roi_by_id[l.segment_id], "sheet_id": l.sheet_id, "epoch": year,
                                "historical": l.historical, "silhouette": l.silhouette,
                                "cluster_scope": cfg.cluster_scope, "status": l.status} for l in labels}
        write_segments_geojson(cfg.output / f"labels_{year}.geojson", segments, props)
        skipped_rows += [(year, g, reason) for g, reason in skipped]
        summary[year] = {"historical": sum(bool(l.historical) for l in labels), "skipped_groups": len(skipped)}
    write_csv(cfg.output / "cluster_skipped.csv", ["epoch_year", "group", "reason"], skipped_rows)
    return summary


# -- evaluate ------------------------------------------------------------------

def _label_files(cfg) -> dict[int, Path]:
    files = {int(p.stem.split("_")[1]): p for p in cfg.output.glob("labels_*.csv")}
    if not files:
        raise ConfigError(f"no labels_<year>.csv in {cfg.output}; run 'cluster' first")
    return dict(sorted(files.items()))


def _strata(segments, percentile):
    threshold, strata = stratify_segments(segments, percentile)
    return threshold, {s.id: st for s, st in zip(segments, strata)}


def _bua_grids(bua_dir: Path) -> dict[int, Path]:
    out = {}
    for p in bua_dir.glob("bua_*.pgm"):
        try:
            out[int(p.stem.split("_")[1])] = p
        except (IndexError, ValueError):
            continue
    return out


GROUPINGS = {
    "epoch": ("study_area", "epoch"),
    "stratum": ("study_area", "epoch", "stratum"),
    "sheet": ("study_area", "epoch", "sheet"),
}


def cmd_evaluate(cfg: RunConfig) -> dict:
    from .raster import as_bua_grid

    cfg.require("roads", "output")
    if cfg.labels is None and cfg.bua_dir is None:
        raise ConfigError("evaluate needs 'labels' and/or 'bua_dir'")
    segments = sorted(read_segments(cfg.roads), key=lambda s: s.id)
    by_id = {s.id: s for s in segments}
    threshold_m, strata = _strata(segments, cfg.percentile)
    label_files = _label_files(cfg)
    summary = {"stratum_threshold_m": threshold_m}

    def base_records(rows, ref_of):
        recs = []
        for row in rows:
            ref = ref_of(row)
            if ref is None:
                continue
            keys = {"study_area": cfg.study_area, "epoch": row["epoch_year"],
                    "sheet": row["sheet_id"] or "unassigned", "stratum": strata[row["segment_id"]]}
            recs.append(EvalRecord(row["segment_id"], by_id[row["segment_id"]].length_m / 1000.0,
                                   row["roi"], row["historical"], ref, keys))
        return recs

    if cfg.labels is not None:
        manual = parse_manual_labels(Path(cfg.labels))
        records = []
        for year, path in label_files.items():
            rows = read_labels_csv(path)
            records += base_records(rows, lambda r: (m.present if (m := manual.get((r["segment_id"], r["epoch_year"])))
                                                     else None))
        for name, group_by in GROUPINGS.items():
            write_report_csv(grouped_report(records, group_by), group_by,
                             cfg.output / f"metrics_manual_by_{name}.csv")
        if cfg.svg:
            _write_roc_svgs(records, cfg.output, "manual")
        summary["manual_records"] = len(records)

    if cfg.bua_dir is not None:
        grids = _bua_grids(cfg.bua_dir)
        if not grids:
            raise ConfigError(f"no bua_<year>.pgm grids in {cfg.bua_dir}")
        buffers = {s.id: buffer_segment(s, cfg.buffer_m).polygon for s in segments}
        frac_rows, records = [], []
        for year, path in label_files.items():
            try:
                bua_year = select_bua_epoch(grids, year)
            except ValueError as exc:
                log.warning("%s; skipping built-up evaluation for %d", exc, year)
                continue
            grid = as_bua_grid(load_raster(grids[bua_year], grids[bua_year].with_suffix(".wld")))
            fractions = {sid: built_up_fraction(buffers[sid], grid) for sid in by_id}
            frac_rows += [(sid, year, bua_year, fractions[sid]) for sid in sorted(fractions)]
            rows = read_labels_csv(path)
            for thr in cfg.thresholds:
                for rec in base_records(rows, lambda r: label_from_fraction(fractions[r["segment_id"]], thr)):
                    rec.keys["threshold"] = thr
                    records.append(rec)
        write_csv(cfg.output / "bua_fractions.csv", ["segment_id", "epoch_year", "bua_year", "fraction"], frac_rows)
        for name, group_by in GROUPINGS.items():
            gb = ("threshold",) + group_by
            write_report_csv(grouped_report(records, gb), gb, cfg.output / f"metrics_bua_by_{name}.csv")
        summary["bua_records"] = len(records)
    return summary


def _write_roc_svgs(records, outdir: Path, tag: str) -> None:
    by_epoch: dict = {}
    for r in records:
        by_epoch.setdefault(r.keys["epoch"], []).append(r)
    for epoch, recs in sorted(by_epoch.items()):
        scored = [r for r in recs if np.isfinite(r.score)]
        refs = [r.ref for r in scored]
        if not any(refs) or all(refs):
            continue
        curve = roc([r.score for r in scored], refs)
        (outdir / f"roc_{tag}_{epoch}.svg").write_text(roc_svg(curve, f"ROC {epoch}"))
        (outdir / f"f1_{tag}_{epoch}.svg").write_text(f1_threshold_svg(curve, f"F1 {epoch}"))


# -- temporal ------------------------------------------------------------------

def cmd_temporal(cfg: RunConfig) -> dict:
    cfg.require("roads", "output")
    segments = sorted(read_segments(cfg.roads), key=lambda s: s.id)
    lengths = {s.id: s.length_m / 1000.0 for s in segments}
    _, strata = _strata(segments, cfg.percentile)
    label_files = _label_files(cfg)
    if len(label_files) < 2:
        raise ConfigError("temporal analysis needs labels for at least two epochs")
    epochs = {y: read_labels_csv(p) for y, p in label_files.items()}
    hist = {y: {r["segment_id"]: r["historical"] for r in rows} for y, rows in epochs.items()}
    rois = {y: {r["segment_id"]: r["roi"] for r in rows if r["status"] != "unclassified"} for y, rows in epochs.items()}
    years = sorted(epochs)

    tables = []
    for i, t1 in enumerate(years):
        for t2 in years[i + 1:]:
            for scope in ("overall", "urban", "rural"):
                keep = [s for s in hist[t1] if scope == "overall" or strata[s] == scope]
                tables.append(cross_tabulate({s: hist[t1][s] for s in keep}, {s: hist[t2].get(s) for s in keep},
                                             lengths, t1, t2, scope))
            pairs = sorted(set(rois[t1]) & set(rois[t2]))
            if pairs:
                h = roi_bivariate_histogram([rois[t1][s] for s in pairs], [rois[t2][s] for s in pairs])
                write_histogram_csv(h, cfg.output / f"roi_hist_{t1}_{t2}.csv")
                if cfg.svg:
                    (cfg.output / f"roi_hist_{t1}_{t2}.svg").write_text(histogram_svg(h, f"ROI {t1} vs {t2}"))
    write_transitions_csv(tables, cfg.output / "transitions.csv")

    totals = {y: historical_km(hist[y], lengths) for y in years}
    counts = {y: sum(bool(v) for v in hist[y].values()) for y in years}
    rows = [("epoch", y, counts[y], totals[y], "") for y in years]
    for a, b in zip(years, years[1:]):
        rows.append(("change", f"{a}-{b}", "", "", length_change(totals[a], totals[b])))
    if len(years) > 2:
        rows.append(("change", f"{years[0]}-{years[-1]}", "", "", length_change(totals[years[0]], totals[years[-1]])))
    write_csv(cfg.output / "lengths.csv", ["kind", "period", "n_historical", "historical_km", "change_pct"], rows)
    return {"pairs": len(tables) // 3, "historical_km": totals}


# -- synth / sweep ---------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> dict:
    from .synthmap import load_scenario_file, render, render_bua, split_sheets

    cfg.require("scenario", "output")
    doc = json.loads(Path(cfg.scenario).read_text())
    segments, scenarios = load_scenario_file(cfg.scenario)
    n_sheets = int(doc.get("n_sheets", 1))
    out = cfg.output
    write_segments_geojson(out / "roads.geojson", segments, {})
    entries, label_rows = [], []
    for sc in scenarios:
        raster, truth = render(sc)
        sheets = split_sheets(raster, n_sheets, prefix=f"{sc.sheet_id}_") if n_sheets > 1 else [raster]
        for sheet in sheets:
            img = out / f"map_{sc.year}_{sheet.sheet_id}.pgm"
            save_raster(sheet, img)
            entries.append(SheetEntry(sheet.sheet_id, img, img.with_suffix(".wld"), sc.year, sheet.footprint()))
        write_csv(out / f"truth_{sc.year}.csv", ["segment_id", "historical"], sorted(truth.items()))
        label_rows += [(sid, sc.year, int(v)) for sid, v in sorted(truth.items())]
        bua_year = (sc.year - 1) // 5 * 5
        save_raster(render_bua(sc, bua_year), out / f"bua_{bua_year}.pgm")
    write_manifest(entries, out / "manifest.json")
    write_csv(out / "labels.csv", ["segment_id", "epoch_year", "present"], label_rows)
    return {"segments": len(segments), "epochs": [sc.year for sc in scenarios]}


def cmd_sweep(cfg: RunConfig) -> dict:
    from .synthmap import jaccard, load_scenario_file, sweep

    cfg.require("scenario", "grid", "output")
    _, scenarios = load_scenario_file(cfg.scenario)
    try:
        grid = json.loads(Path(cfg.grid).read_text())
    except ValueError as exc:
        raise ConfigError(f"bad sweep grid {cfg.grid}: {exc}") from None
    rows = sweep(scenarios[0], grid, cfg.seed)
    base = rows[0].historical_ids if rows else frozenset()
    write_csv(cfg.output / "sweep.csv",
              ["csd_m", "csl_m", "target_h", "target_w", "precision", "recall", "f1", "n_historical", "jaccard_vs_first"],
              [(r.csd_m, r.csl_m, r.target_h, r.target_w, r.precision, r.recall, r.f1, len(r.historical_ids),
                jaccard(base, r.historical_ids)) for r in rows])
    return {"cells": len(rows)}


def cmd_pipeline(cfg: RunConfig) -> dict:
    summary = {"roi": cmd_roi(cfg), "cluster": cmd_cluster(cfg)}
    if cfg.labels is not None or cfg.bua_dir is not None:
        summary["evaluate"] = cmd_evaluate(cfg)
    if len(summary["roi"]) >= 2:
        summary["temporal"] = cmd_temporal(cfg)
    manifest = {
        "version": __version__,
        "global_seed": cfg.seed,
        "params": {"csd_m": cfg.csd, "csl_m": cfg.csl, "target_h": cfg.target_h, "target_w": cfg.target_w},
        "cluster_scope": cfg.cluster_scope,
        "thresholds": list(cfg.thresholds),
        "percentile": cfg.percentile,
        "oob_limit": cfg.oob_limit,
        "buffer_m": cfg.buffer_m,
    }
    (cfg.output / "run_manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return summary


COMMANDS = {
    "roi": cmd_roi, "cluster": cmd_cluster, "evaluate": cmd_evaluate, "temporal": cmd_temporal,
    "synth": cmd_synth, "sweep": cmd_sweep, "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="histroads", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--output", "-o")
        s.add_argument("--roads")
        s.add_argument("--manifest")
        s.add_argument("--labels")
        s.add_argument("--bua-dir", dest="bua_dir")
        s.add_argument("--scenario")
        s.add_argument("--grid")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--scope", choices=("sheet", "area"))
        s.add_argument("--csd", type=float)
        s.add_argument("--csl", type=float)
        s.add_argument("--target-h", dest="target_h", type=int)
        s.add_argument("--target-w", dest="target_w", type=int)
        s.add_argument("--svg", action="store_true", default=None)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = load_config(args.config, overrides)
        summary = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataFormatError, RasterFormatError, LabelFormatError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    log.info("%s: %s", args.command, summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
