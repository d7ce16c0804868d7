"""
How much does a larger input bound buy?
=======================================

A small closed-loop Monte-Carlo sweep over the input bound for the
four-state benchmark, next to the published curve.  With 40 paths per point
the numbers carry a few percent of sampling noise; the command line
(``netmpc reproduce fig2``) runs the full-size version.
"""

from netmpc import presets
from netmpc.simulation import sweep

PATHS = 40
cfg = presets.base_config(paths=PATHS, seed=7)
values = [2.0, 5.0, 10.0]
rows, _ = sweep(cfg, "u_max", values, ["full", "zero"])

published = dict(zip(presets.GRID_UMAX, presets.REFERENCE["fig2"]["full"]))
print(f"{'u_max':>6} {'variant':>8} {'MSB':>9} {'+-se':>7} {'MAE':>7} {'published MSB':>14}")
for r in rows:
    ref = f"{published[r['value']]:.2f}" if r["variant"] == "full" else "-"
    print(f"{r['value']:6.1f} {r['variant']:>8} {r['msb']:9.1f} {r['msb_se']:7.1f} "
          f"{r['mae']:7.3f} {ref:>14}")

# Expected shape: MSB falls as the bound grows, MAE rises, and the full
# feedback family sits at or below the open-loop (zero feedback) family.
