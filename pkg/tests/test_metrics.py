import csv
import math

import numpy as np
import pytest

from histroads.metrics import (REPORT_COLUMNS, EvalRecord, confusion, evaluate, f1_score, f1_threshold_svg,
                               grouped_report, prf, roc, roc_svg, write_report_csv)


def pairwise_auc(scores, labels):
    """O(n^2) Mann-Whitney oracle: P(score_pos > score_neg) + 0.5 P(tie)."""
    s = np.asarray(scores, float)
    y = np.asarray(labels, bool)
    pos, neg = s[y], s[~y]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class TestConfusion:
    def test_against_tally(self):
        rng = np.random.default_rng(0)
        pred = rng.random(300) < 0.5
        ref = rng.random(300) < 0.4
        lengths = rng.uniform(0.1, 2, 300)
        c = confusion(pred, ref, lengths)
        tally = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
        km = dict.fromkeys(tally, 0.0)
        for p, r, L in zip(pred, ref, lengths):
            k = ("t" if p == r else "f") + ("p" if p else "n")
            tally[k] += 1
            km[k] += L
        assert (c.tp, c.fp, c.fn, c.tn) == (tally["tp"], tally["fp"], tally["fn"], tally["tn"])
        assert c.tp_len == pytest.approx(km["tp"]) and c.fn_len == pytest.approx(km["fn"])
        assert c.km == pytest.approx(lengths.sum())

    def test_half(self):
        p, r, f = prf(confusion([1, 1, 0, 0], [1, 0, 1, 0]))
        assert (p, r, f) == (0.5, 0.5, 0.5)

    def test_equal_lengths_match_instance(self):
        rng = np.random.default_rng(1)
        pred, ref = rng.random(50) < 0.5, rng.random(50) < 0.5
        c = confusion(pred, ref, np.full(50, 0.7))
        np.testing.assert_allclose(prf(c, "length"), prf(c, "instance"), rtol=1e-12)

    def test_length_weighting_differs(self):
        c = confusion([1, 1], [1, 0], [3.0, 1.0])
        assert prf(c, "instance")[0] == 0.5
        assert prf(c, "length")[0] == 0.75

    def test_undefined(self):
        p, r, f = prf(confusion([0, 0], [0, 0]))
        assert math.isnan(p) and math.isnan(r) and math.isnan(f)
        p, r, f = prf(confusion([0, 0], [1, 0]))
        assert math.isnan(p) and r == 0.0 and math.isnan(f)

    def test_misaligned(self):
        with pytest.raises(ValueError):
            confusion([1, 0], [1])

    def test_bad_weighting(self):
        with pytest.raises(ValueError):
            prf(confusion([1], [1]), "km")


def test_f1_identity():
    rng = np.random.default_rng(2)
    for p, r in rng.random((100, 2)):
        assert f1_score(p, r) == pytest.approx(1 / (0.5 / p + 0.5 / r))
    assert f1_score(0.0, 0.0) == 0.0


class TestROC:
    def test_pairwise_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 200))
            y = rng.random(n) < rng.uniform(0.1, 0.9)
            if y.all() or not y.any():
                y[0] = not y[0]
            s = rng.integers(0, 20, n) + rng.normal(0, 1, n) * (rng.random() < 0.5)
            assert roc(s, y).auc == pytest.approx(pairwise_auc(s, y), rel=1e-9, abs=1e-12)

    def test_reversed_labels(self):
        rng = np.random.default_rng(4)
        s = rng.integers(0, 10, 80).astype(float)
        y = rng.random(80) < 0.5
        a, b = roc(s, y), roc(s, ~y)
        assert b.auc_exact == 1 - a.auc_exact
        assert a.auc == float(a.auc_exact)

    def test_perfect_and_tied(self):
        assert roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc == 1.0
        assert roc([0.5] * 6, [0, 1, 0, 1, 1, 0]).auc == 0.5

    def test_single_class(self):
        with pytest.raises(ValueError):
            roc([1, 2, 3], [1, 1, 1])

    def test_curve_shape(self):
        c = roc([3, 1, 2, 2, 5], [1, 0, 1, 0, 1])
        assert c.fpr[0] == 0 and c.tpr[0] == 0 and c.fpr[-1] == 1 and c.tpr[-1] == 1
        assert (np.diff(c.fpr) >= 0).all() and (np.diff(c.tpr) >= 0).all()
        np.testing.assert_array_equal(c.thresholds[1:], [5, 3, 2, 1])

    def test_f1_at_threshold_matches_direct(self):
        rng = np.random.default_rng(5)
        s = rng.normal(size=60)
        y = rng.random(60) < 0.5
        c = roc(s, y)
        for thr, f in zip(c.thresholds[1:], c.f1[1:]):
            assert f == pytest.approx(prf(confusion(s >= thr, y))[2])
        assert c.f1_max == np.nanmax(c.f1)
        assert prf(confusion(s >= c.threshold_at_f1_max, y))[2] == pytest.approx(c.f1_max)


def records():
    rng = np.random.default_rng(6)
    out = []
    for i in range(40):
        ref = bool(rng.random() < 0.5)
        out.append(EvalRecord(f"s{i}", float(rng.uniform(0.1, 1)), float(rng.normal(ref, 0.7)),
                              bool(rng.random() < 0.7) == ref, ref,
                              {"epoch": 1900 + 10 * (i % 2), "stratum": "urban" if i % 3 else "rural"}))
    return out


class TestReports:
    def test_evaluate_counts(self):
        recs = records()
        row = evaluate(recs)
        assert row["n"] == 40 and row["km"] == pytest.approx(sum(r.length_km for r in recs))
        c = confusion([r.pred for r in recs], [r.ref for r in recs], [r.length_km for r in recs])
        assert row["F1_i"] == prf(c)[2] and row["F1_L"] == prf(c, "length")[2]
        assert row["AUC"] == pytest.approx(pairwise_auc([r.score for r in recs], [r.ref for r in recs]))

    def test_unclassified_excluded_from_counts(self):
        recs = [EvalRecord("a", 1, 1.0, True, True), EvalRecord("b", 1, 0.0, None, False)]
        row = evaluate(recs)
        assert row["P_i"] == 1.0 and row["n"] == 2

    def test_grouped_and_csv(self, tmp_path):
        rows = grouped_report(records(), ["epoch", "stratum"])
        assert [(r["epoch"], r["stratum"]) for r in rows] == [(1900, "rural"), (1900, "urban"),
                                                              (1910, "rural"), (1910, "urban")]
        assert sum(r["n"] for r in rows) == 40
        path = tmp_path / "m.csv"
        write_report_csv(rows, ["epoch", "stratum"], path)
        with open(path) as fh:
            got = list(csv.reader(fh))
        assert got[0] == ["epoch", "stratum"] + REPORT_COLUMNS
        assert len(got) == 5

    def test_undefined_written(self, tmp_path):
        rows = grouped_report([EvalRecord("a", 1, 1.0, False, False, {"g": "x"})], ["g"])
        write_report_csv(rows, ["g"], tmp_path / "u.csv")
        line = (tmp_path / "u.csv").read_text().splitlines()[1]
        assert "undefined" in line and "nan" not in line

    def test_missing_key(self):
        with pytest.raises(KeyError):
            grouped_report(records(), ["sheet"])


def test_svgs():
    c = roc([3, 1, 2, 2, 5], [1, 0, 1, 0, 1])
    for svg in (roc_svg(c), f1_threshold_svg(c)):
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>") and "<polyline" in svg
