"""
Boundary equidistribution on the stadium, driven through the batch CLI.

Runs every stage of ``demos/configs/stadium.cfg`` (solve, trace, lift,
rellich, weyl, report) and prints the top-window statistics.  The first run
spends several minutes in the eigensolver; later runs reuse the archive under
``$QERLAB_ARCHIVE_ROOT`` (default ``~/.cache/qerlab``).

Run:  python demos/03_stadium_pipeline.py
"""

import csv
from pathlib import Path

from qerlab.cli import main, parse_config

cfg_path = Path(__file__).parent / "configs" / "stadium.cfg"
status = main(["all", "--config", str(cfg_path), "--stages", "solve,trace,report", "-v"])
if status:
    raise SystemExit(status)

run = parse_config(cfg_path.read_text()).run_dir
print(f"\nartifacts in {run}")


def top_rows(name, **match):
    with open(run / name, newline="") as f:
        rows = [r for r in csv.DictReader(f) if all(r[k] == v for k, v in match.items())]
    top = max(float(r["window_lo"]) for r in rows)
    return [r for r in rows if float(r["window_lo"]) == top]


print("\nCauchy-data lifts against the +1/2 state, top window")
for r in top_rows("report-cauchy.csv"):
    print(f"  {r['symbol']:40s} mean {float(r['mean']):+.4f}  state {float(r['omega']):+.4f}  gap {float(r['relative_gap']):.3f}")

print("\nrenormalised lifts against the -1/2 state, eps1 = 0.1, density-one subsequence")
for r in top_rows("report-renormalized.csv", eps1="0.1", subsequence="density-one"):
    print(f"  {r['symbol']:40s} mean {float(r['mean']):+.4f}  state {float(r['omega']):+.4f}  gap {float(r['relative_gap']):.3f}")

with open(run / "report-glancing.csv", newline="") as f:
    g = list(csv.DictReader(f))
print(f"\nglancing sums: Dirichlet slope {float(g[0]['dirichlet_slope']):.2f}, Neumann slope {float(g[0]['neumann_slope']):.2f}")
print("plots: report-cauchy.svg, report-renormalized.svg, report-glancing.svg")
