"""Multi-epoch plausibility: label transitions, length change, ROI histograms."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

CLASSES = ("not_existent", "persistent", "newly_built", "disappeared")


@dataclass(frozen=True)
class TransitionTable:
    t1: int
    t2: int
    km: dict
    percent: dict
    n_segments: int
    n_excluded: int
    scope: str = "overall"
    km_exact: dict = field(default_factory=dict, compare=False)   # rational sums; ``km`` holds their rounding

    @property
    def total_km(self) -> float:
        return float(sum(self.km.values()))


def transition_percentages(km: dict) -> dict:
    """Each class's share of the summed network length, in percent."""
    total = float(sum(km.values()))
    if total <= 0:
        return {c: float("nan") for c in km}
    return {c: 100.0 * v / total for c, v in km.items()}


def _transition_class(a: bool, b: bool) -> str:
    if a:
        return "persistent" if b else "disappeared"
    return "newly_built" if b else "not_existent"


def cross_tabulate(labels_t1: dict, labels_t2: dict, lengths_km: dict,
                   t1: int = 0, t2: int = 0, scope: str = "overall") -> TransitionTable:
    """Length-weighted transition classes between two epochs.

    ``labels_*`` map segment id to True/False (historical or not) or None for
    unclassified segments. Segments lacking a label in either epoch are
    excluded and counted in ``n_excluded``. Lengths are summed exactly, so
    the per-class totals do not depend on segment order.
    """
    exact = dict.fromkeys(CLASSES, Fraction(0))
    n, excluded = 0, 0
    for sid in sorted(set(labels_t1) | set(labels_t2)):
        a, b = labels_t1.get(sid), labels_t2.get(sid)
        if a is None or b is None:
            excluded += 1
            continue
        exact[_transition_class(bool(a), bool(b))] += Fraction(float(lengths_km[sid]))
        n += 1
    km = {c: float(v) for c, v in exact.items()}
    return TransitionTable(t1, t2, km, transition_percentages(km), n, excluded, scope, exact)


def length_change(total_t1_km: float, total_t2_km: float) -> float:
    """Relative change from the earlier total, in percent."""
    if total_t1_km == 0:
        return float("nan")
    return 100.0 * (total_t2_km - total_t1_km) / total_t1_km


def historical_km(labels: dict, lengths_km: dict, exact: bool = False):
    """Summed length of segments labelled historical (a Fraction if ``exact``)."""
    total = sum((Fraction(float(lengths_km[s])) for s, v in labels.items() if v), Fraction(0))
    return total if exact else float(total)


@dataclass(frozen=True)
class BivariateROIHistogram:
    counts: np.ndarray      # (bins, bins), rows = T1 bins, cols = T2 bins
    edges_t1: np.ndarray
    edges_t2: np.ndarray


def _edges(x: np.ndarray, bins: int, lo=None, hi=None) -> np.ndarray:
    lo = float(x.min()) if lo is None else lo
    hi = float(x.max()) if hi is None else hi
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bins + 1)


def roi_bivariate_histogram(roi_t1, roi_t2, bins: int = 50, binning: str = "per_epoch") -> BivariateROIHistogram:
    """Equal-width 2D histogram of paired ROI values.

    With ``per_epoch`` binning each axis spans its own epoch's [min, max];
    ``pooled`` uses the common range of both epochs. The top edge is
    inclusive.
    """
    a = np.asarray(roi_t1, dtype=float)
    b = np.asarray(roi_t2, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("need equally many, non-zero paired ROI values")
    if binning == "per_epoch":
        ea, eb = _edges(a, bins), _edges(b, bins)
    elif binning == "pooled":
        both = np.concatenate([a, b])
        ea = eb = _edges(both, bins)
    else:
        raise ValueError("binning must be 'per_epoch' or 'pooled'")
    counts, _, _ = np.histogram2d(a, b, bins=[ea, eb])
    return BivariateROIHistogram(counts.astype(np.int64), ea, eb)


def write_transitions_csv(tables, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "T1", "T2"] + [f"km_{c}" for c in CLASSES] + [f"pct_{c}" for c in CLASSES]
                   + ["n_segments", "n_excluded"])
        for t in tables:
            w.writerow([t.scope, t.t1, t.t2] + [f"{t.km[c]:.6f}" for c in CLASSES]
                       + [f"{t.percent[c]:.2f}" for c in CLASSES] + [t.n_segments, t.n_excluded])


def write_histogram_csv(hist: BivariateROIHistogram, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t1_bin_lo", "t1_bin_hi"] + [repr(float(e)) for e in hist.edges_t2[:-1]])
        for i, row in enumerate(hist.counts):
            w.writerow([repr(float(hist.edges_t1[i])), repr(float(hist.edges_t1[i + 1]))] + [int(c) for c in row])


def histogram_svg(hist: BivariateROIHistogram, title: str = "ROI T1 vs T2") -> str:
    n = hist.counts.shape[0]
    cell = 6
    size = n * cell
    peak = max(1, int(hist.counts.max()))
    rects = []
    for i in range(n):
        for j in range(hist.counts.shape[1]):
            c = int(hist.counts[i, j])
            if c:
                shade = int(255 - 255 * np.log1p(c) / np.log1p(peak))
                # T1 on x, T2 on y (upwards)
                rects.append(f'<rect x="{i * cell}" y="{size - (j + 1) * cell}" width="{cell}" height="{cell}" '
                             f'fill="rgb({shade},{shade},255)"/>')
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}">'
            f'<text x="2" y="{size + 15}" font-size="11">{title}</text>\n' + "\n".join(rects) + "\n</svg>\n")
