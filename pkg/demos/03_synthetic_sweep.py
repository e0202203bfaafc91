"""Parameter sensitivity on a synthetic study area.

The symbols are shifted 20 m to the east, as a poorly georeferenced sheet
would be. Short cross-sections miss the displaced symbol on north-south
streets while 100 m cross-sections still reach it. Changing the axial image
size barely changes which roads are found.
"""

from histroads.synthmap import (SymbolStyle, SyntheticScenario, grid_network, jaccard, nested_historical_sets,
                                sweep)

segments = grid_network(200, seed=1)
historical = nested_historical_sets([s.id for s in segments], [0.6], seed=3)[0]
shifted = SyntheticScenario(tuple(segments), historical, SymbolStyle(offset_vec=(20, 0)), seed=11)

print("CSL sweep, 20 m offset")
for row in sweep(shifted, [{"csl_m": c} for c in (25, 50, 75, 100, 150)]):
    print(f"  CSL {row.csl_m:5.0f} m  w {row.target_w:3d}  P {row.precision:.3f}  R {row.recall:.3f}  F1 {row.f1:.3f}")

clean = SyntheticScenario(tuple(segments), historical, SymbolStyle(), seed=11)
grid = [{"target_h": h, "target_w": w} for h in (10, 20, 40) for w in (10, 20, 40)]
rows = sweep(clean, grid)
base = next(r for r in rows if (r.target_h, r.target_w) == (20, 20)).historical_ids
print("axial image size sweep, no offset")
for r in rows:
    print(f"  h {r.target_h:2d}  w {r.target_w:2d}  F1 {r.f1:.3f}  Jaccard vs 20x20 {jaccard(base, r.historical_ids):.3f}")
