"""End-to-end batch run: two epochs, two sheets, evaluation and change.

The command line tool renders a synthetic scenario with monotone road
growth between 1900 and 1950, then runs ROI extraction, per-sheet
clustering, evaluation against both manual labels and built-up reference
grids, and the multi-temporal cross tabulation.
"""

import csv
import json
import tempfile
from pathlib import Path

from histroads.cli import main

work = Path(tempfile.mkdtemp(prefix="histroads-demo-"))
scenario = work / "scenario.json"
scenario.write_text(json.dumps({
    "seed": 5, "network": {"n_segments": 120, "seed": 2}, "n_sheets": 2,
    "style": {"noise_sigma": 8, "distractors": 2},
    "epochs": [{"year": 1900, "historical_fraction": 0.4}, {"year": 1950, "historical_fraction": 0.75}],
}))

main(["synth", "--scenario", str(scenario), "-o", str(work / "data")])
data, out = work / "data", work / "out"
main(["pipeline", "--roads", str(data / "roads.geojson"), "--manifest", str(data / "manifest.json"),
      "--labels", str(data / "labels.csv"), "--bua-dir", str(data), "--svg", "-o", str(out)])


def show(name, cols):
    with open(out / name) as fh:
        for row in csv.DictReader(fh):
            print("  " + "  ".join(f"{c}={row[c]}" for c in cols))


print("manual labels, per epoch")
show("metrics_manual_by_epoch.csv", ["epoch", "n", "F1_i", "F1_L", "AUC"])
print("built-up reference, per threshold and epoch")
show("metrics_bua_by_epoch.csv", ["threshold", "epoch", "F1_i", "AUC"])
print("transitions")
show("transitions.csv", ["scope", "T1", "T2", "pct_not_existent", "pct_persistent", "pct_newly_built",
                         "pct_disappeared"])
print("length change")
show("lengths.csv", ["kind", "period", "historical_km", "change_pct"])
print("outputs in", out)
