"""Confusion statistics, precision/recall/F1, ROC curves and grouped reports.

Undefined ratios (zero denominators) are ``nan`` in memory and written as
``undefined`` in CSV output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

UNDEFINED = "undefined"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    tp_len: float = 0.0
    fp_len: float = 0.0
    fn_len: float = 0.0
    tn_len: float = 0.0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def km(self) -> float:
        return self.tp_len + self.fp_len + self.fn_len + self.tn_len


def confusion(pred, ref, lengths_km=None) -> ConfusionCounts:
    pred = np.asarray(pred, dtype=bool)
    ref = np.asarray(ref, dtype=bool)
    if pred.shape != ref.shape:
        raise ValueError("pred and ref must be aligned")
    lengths = np.zeros(pred.shape) if lengths_km is None else np.asarray(lengths_km, dtype=float)
    cells = {
        "tp": pred & ref, "fp": pred & ~ref, "fn": ~pred & ref, "tn": ~pred & ~ref,
    }
    kw = {}
    for name, m in cells.items():
        kw[name] = int(m.sum())
        kw[f"{name}_len"] = float(lengths[m].sum())
    return ConfusionCounts(**kw)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else float("nan")


def prf(counts: ConfusionCounts, weighting: str = "instance") -> tuple[float, float, float]:
    """Precision, recall and F1 for one weighting (``instance`` or ``length``).

    F1 always combines the precision and recall of the same weighting.
    """
    if weighting == "instance":
        tp, fp, fn = counts.tp, counts.fp, counts.fn
    elif weighting == "length":
        tp, fp, fn = counts.tp_len, counts.fp_len, counts.fn_len
    else:
        raise ValueError("weighting must be 'instance' or 'length'")
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return p, r, f1_score(p, r)


def f1_score(p: float, r: float) -> float:
    if math.isnan(p) or math.isnan(r):
        return float("nan")
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class ROCCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray   # first entry +inf (nothing predicted positive)
    f1: np.ndarray           # F1 at each threshold (nan at +inf)
    auc: float
    f1_max: float
    threshold_at_f1_max: float
    auc_exact: Fraction      # rational trapezoid area; ``auc`` is its rounding


def roc(scores, labels) -> ROCCurve:
    """ROC over every distinct score; positive prediction is ``score >= thr``."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels must be aligned")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    thr = s[last_of_group]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    # trapezoid sum on integer counts: sum dFP * (TP_i + TP_{i-1}) / (2 P N)
    tp0, fp0 = np.r_[0, tp], np.r_[0, fp]
    num = int(np.sum(np.diff(fp0).astype(np.int64) * (tp0[1:] + tp0[:-1]).astype(np.int64)))
    auc_exact = Fraction(num, 2 * n_pos * n_neg)
    auc = num / (2 * n_pos * n_neg)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    best = int(np.argmax(f1))
    return ROCCurve(
        fpr=fpr, tpr=tpr, thresholds=np.r_[np.inf, thr], f1=np.r_[np.nan, f1],
        auc=auc, f1_max=float(f1[best]), threshold_at_f1_max=float(thr[best]), auc_exact=auc_exact,
    )


@dataclass(frozen=True)
class EvalRecord:
    """One segment-epoch observation for evaluation.

    ``keys`` holds the grouping attributes (study_area, sheet, stratum,
    epoch, ...). ``pred`` may be None when the segment was not classified.
    """

    segment_id: str
    length_km: float
    score: float
    pred: bool | None
    ref: bool
    keys: dict = field(default_factory=dict)


REPORT_COLUMNS = ["n", "km", "P_i", "R_i", "F1_i", "P_L", "R_L", "F1_L", "AUC", "F1_MAX", "thr@F1_MAX"]


def evaluate(records: Sequence[EvalRecord]) -> dict:
    """Metrics row for one group of records."""
    classified = [r for r in records if r.pred is not None]
    counts = confusion([r.pred for r in classified], [r.ref for r in classified],
                       [r.length_km for r in classified])
    pi, ri, fi = prf(counts, "instance")
    pl, rl, fl = prf(counts, "length")
    scored = [r for r in records if r.score is not None and np.isfinite(r.score)]
    refs = [r.ref for r in scored]
    if scored and any(refs) and not all(refs):
        curve = roc([r.score for r in scored], refs)
        auc, f1max, thr = curve.auc, curve.f1_max, curve.threshold_at_f1_max
    else:
        auc = f1max = thr = float("nan")
    return {
        "n": len(records), "km": float(sum(r.length_km for r in records)),
        "P_i": pi, "R_i": ri, "F1_i": fi, "P_L": pl, "R_L": rl, "F1_L": fl,
        "AUC": auc, "F1_MAX": f1max, "thr@F1_MAX": thr,
    }


def grouped_report(records: Iterable[EvalRecord], group_by: Sequence[str]) -> list[dict]:
    """One metrics row per combination of ``group_by`` keys, sorted by key."""
    groups: dict[tuple, list[EvalRecord]] = {}
    for r in records:
        try:
            key = tuple(r.keys[g] for g in group_by)
        except KeyError as exc:
            raise KeyError(f"record {r.segment_id} lacks group key {exc}") from None
        groups.setdefault(key, []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        row = dict(zip(group_by, key))
        row.update(evaluate(groups[key]))
        rows.append(row)
    return rows


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return UNDEFINED if math.isnan(v) else repr(float(v))
    return str(v)


def write_report_csv(rows: Sequence[dict], group_by: Sequence[str], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(group_by) + REPORT_COLUMNS)
        for row in rows:
            w.writerow([format_value(row[c]) for c in list(group_by) + REPORT_COLUMNS])


def _svg_polyline(xs, ys, title: str, xlabel: str, ylabel: str, diagonal: bool = False) -> str:
    size, pad = 320, 40
    sx = lambda v: pad + v * (size - 2 * pad)
    sy = lambda v: size - pad - v * (size - 2 * pad)
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<rect x="{pad}" y="{pad}" width="{size - 2 * pad}" height="{size - 2 * pad}" fill="none" stroke="#888"/>',
    ]
    if diagonal:
        parts.append(f'<path d="M{sx(0)},{sy(0)} L{sx(1)},{sy(1)}" stroke="#bbb" stroke-dasharray="4"/>')
    parts += [
        f'<polyline points="{pts}" fill="none" stroke="#c00" stroke-width="2"/>',
        f'<text x="{size / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{size / 2}" y="{size - 10}" text-anchor="middle" font-size="11">{xlabel}</text>',
        f'<text x="12" y="{size / 2}" font-size="11" transform="rotate(-90 12 {size / 2})" text-anchor="middle">{ylabel}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def roc_svg(curve: ROCCurve, title: str = "ROC") -> str:
    return _svg_polyline(curve.fpr, curve.tpr, f"{title} (AUC {curve.auc:.3f})", "FPR", "TPR", diagonal=True)


def f1_threshold_svg(curve: ROCCurve, title: str = "F1 vs threshold") -> str:
    thr = curve.thresholds[1:]
    f1 = curve.f1[1:]
    lo, hi = float(thr.min()), float(thr.max())
    xs = (thr - lo) / (hi - lo) if hi > lo else np.zeros_like(thr)
    order = np.argsort(xs)
    return _svg_polyline(xs[order], f1[order], f"{title} (max {curve.f1_max:.3f})",
                         f"threshold [{lo:.4g}, {hi:.4g}]", "F1")
