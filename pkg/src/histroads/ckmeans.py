"""Exact one-dimensional k-means and silhouette scores.

Optimal 1D k-means clusters are contiguous runs of the sorted data, so the
problem reduces to choosing ``k - 1`` break points. The dynamic program
runs over the distinct sorted values (weighted by multiplicity, which also
keeps ties inside one cluster) and uses the monotonicity of optimal break
points for a divide-and-conquer row solve, O(k n log n) overall.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray      # cluster index per input value, 0 = lowest mean
    means: np.ndarray
    wcss: float
    boundary: float         # smallest value of the top cluster (nan if degenerate)
    degenerate: bool = False


class _Cost:
    """Weighted within-cluster sum of squares of ``u[i..j]`` in O(1)."""

    def __init__(self, u: np.ndarray, w: np.ndarray):
        # centring keeps the prefix sums well conditioned
        x = u - np.average(u, weights=w)
        self.W = np.concatenate([[0.0], np.cumsum(w)])
        self.S = np.concatenate([[0.0], np.cumsum(w * x)])
        self.Q = np.concatenate([[0.0], np.cumsum(w * x * x)])

    def __call__(self, i, j):
        n = self.W[j + 1] - self.W[i]
        s = self.S[j + 1] - self.S[i]
        return np.maximum(self.Q[j + 1] - self.Q[i] - s * s / n, 0.0)


def _solve_row(prev: np.ndarray, cost: _Cost, m: int, row: int):
    """Fill ``D[row][i] = min_j prev[j-1] + cost(j, i)`` for i >= row.

    The argmin is non-decreasing in ``i``, so each midpoint's search range
    is bounded by its neighbours' answers.
    """
    cur = np.full(m, np.inf)
    arg = np.zeros(m, dtype=np.intp)
    stack = [(row, m - 1, row, m - 1)]
    while stack:
        lo, hi, jlo, jhi = stack.pop()
        if lo > hi:
            continue
        mid = (lo + hi) // 2
        js = np.arange(jlo, min(jhi, mid) + 1)
        vals = prev[js - 1] + cost(js, mid)
        k = int(np.argmin(vals))
        cur[mid], arg[mid] = vals[k], js[k]
        stack.append((lo, mid - 1, jlo, js[k]))
        stack.append((mid + 1, hi, js[k], jhi))
    return cur, arg


def _optimal_breaks(u: np.ndarray, w: np.ndarray, k: int) -> list[int]:
    """Start indices (into ``u``) of clusters 1..k-1."""
    m = len(u)
    cost = _Cost(u, w)
    D = cost(np.zeros(m, dtype=np.intp), np.arange(m))
    args = []
    for row in range(1, k):
        D, arg = _solve_row(D, cost, m, row)
        args.append(arg)
    starts, i = [], m - 1
    for arg in reversed(args):
        j = int(arg[i])
        starts.append(j)
        i = j - 1
    return sorted(starts)


def ckmeans(values, k: int = 2) -> ClusterResult:
    """Globally optimal k-means partition of 1D data.

    Raises
    ------
    ValueError
        If there are fewer than ``k`` values or any value is not finite.
    """
    x = np.asarray(values, dtype=float).ravel()
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.size < k:
        raise ValueError(f"need at least {k} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    u, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    if u.size < k:
        labels = np.zeros(x.size, dtype=np.intp) if u.size == 1 else inverse.astype(np.intp)
        means = np.array([u[min(i, u.size - 1)] for i in range(k)])
        wcss = float(np.sum((x - means[labels]) ** 2))
        return ClusterResult(labels, means, wcss, float("nan"), degenerate=True)
    starts = _optimal_breaks(u, counts.astype(float), k)
    ucluster = np.zeros(u.size, dtype=np.intp)
    for s in starts:
        ucluster[s:] += 1
    labels = ucluster[inverse]
    means = np.array([x[labels == c].mean() for c in range(k)])
    wcss = float(np.sum((x - means[labels]) ** 2))
    boundary = float(u[starts[-1]]) if starts else float(u[0])
    return ClusterResult(labels, means, wcss, boundary)


def assign_historical(values, result: ClusterResult) -> np.ndarray:
    """True for members of the cluster with the highest mean.

    A degenerate result yields no historical members.
    """
    n = np.asarray(values).size
    if result.degenerate:
        logger.warning("degenerate clustering (all values equal); no segment marked historical")
        return np.zeros(n, dtype=bool)
    return result.labels == int(np.argmax(result.means))


def _mean_abs_dist(x: np.ndarray, sorted_ref: np.ndarray, prefix: np.ndarray) -> np.ndarray:
    """Sum over ``sorted_ref`` of ``|x - r|`` for each ``x``."""
    n = sorted_ref.size
    idx = np.searchsorted(sorted_ref, x, side="right")
    left = x * idx - prefix[idx]
    right = (prefix[n] - prefix[idx]) - x * (n - idx)
    return left + right


def silhouette(values, labels) -> np.ndarray:
    """Silhouette score per value for a two-cluster labelling.

    Members of singleton clusters score 0. If fewer than two clusters are
    present every score is 0 and a warning is logged.
    """
    x = np.asarray(values, dtype=float).ravel()
    lab = np.asarray(labels).ravel()
    clusters = np.unique(lab)
    out = np.zeros(x.size)
    if clusters.size < 2:
        logger.warning("silhouette needs two non-empty clusters; returning zeros")
        return out
    sums = {}
    for c in clusters:
        ref = np.sort(x[lab == c])
        sums[c] = (ref, np.concatenate([[0.0], np.cumsum(ref)]))
    for c in clusters:
        mask = lab == c
        n_own = int(mask.sum())
        if n_own == 1:
            continue
        xi = x[mask]
        a = _mean_abs_dist(xi, *sums[c]) / (n_own - 1)
        b = np.full(xi.size, np.inf)
        for o in clusters:
            if o != c:
                b = np.minimum(b, _mean_abs_dist(xi, *sums[o]) / sums[o][0].size)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        out[mask] = np.clip(s, -1.0, 1.0)
    return out


@dataclass(frozen=True)
class ClusterLabel:
    segment_id: str
    epoch_year: int
    sheet_id: str | None
    group: str
    status: str               # "classified", "unclassified" (invalid ROI) or "skipped"
    historical: bool | None
    cluster: int              # -1 when not classified
    silhouette: float


SCOPES = ("per_sheet", "per_study_area")


def _group_key(rec, scope: str) -> str:
    if scope == "per_sheet":
        return f"{rec.epoch_year}/{rec.sheet_id}"
    return f"{rec.epoch_year}"


def cluster_by_scope(records, scope: str = "per_sheet"):
    """Cluster ROI records within each map sheet or each study-area epoch.

    Returns ``(labels, skipped)``: one :class:`ClusterLabel` per input record
    in input order, and a list of ``(group, reason)`` for groups that could
    not be clustered.
    """
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}")
    groups: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        if r.valid and r.sheet_id is not None:
            groups.setdefault(_group_key(r, scope), []).append(i)
    out: list[ClusterLabel | None] = [None] * len(records)
    skipped = []
    for g in sorted(groups):
        idx = groups[g]
        vals = np.array([records[i].roi for i in idx])
        reason = None
        if len(idx) < 2:
            reason = f"only {len(idx)} valid record(s)"
        else:
            res = ckmeans(vals, 2)
            if res.degenerate:
                reason = "all ROI values equal"
        if reason:
            logger.warning("skipping cluster group %s: %s", g, reason)
            skipped.append((g, reason))
            for i in idx:
                r = records[i]
                out[i] = ClusterLabel(r.segment_id, r.epoch_year, r.sheet_id, g, "skipped", None, -1, float("nan"))
            continue
        hist = assign_historical(vals, res)
        sil = silhouette(vals, res.labels)
        for n, i in enumerate(idx):
            r = records[i]
            out[i] = ClusterLabel(r.segment_id, r.epoch_year, r.sheet_id, g, "classified",
                                  bool(hist[n]), int(res.labels[n]), float(sil[n]))
    for i, r in enumerate(records):
        if out[i] is None:
            g = _group_key(r, scope) if r.sheet_id is not None else ""
            out[i] = ClusterLabel(r.segment_id, r.epoch_year, r.sheet_id, g, "unclassified", None, -1, float("nan"))
    return out, skipped
