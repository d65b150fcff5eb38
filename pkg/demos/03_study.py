"""
The twelve-configuration study
==============================

30, 60 and 120 EVs on 30 fast or 30 slow columns, under both strategies,
replicated with independent seeds. Writes CSVs and SVG figures to
``demo_out/study``.
"""

import sys
from pathlib import Path

from evcharge import builtin_matrix, run_matrix
from evcharge.report import emit_report
from evcharge.runner import read_results, write_results

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 10
out = Path("demo_out/study")

matrix = builtin_matrix(replications=reps)
results = run_matrix(matrix, workers=1)
write_results(results, out)

rows = read_results(out)["summary"]
print(f"{'exp':>3} {'EVs':>4} {'infra':>5} {'strat':>5} {'TTR med':>8} {'charge':>7} "
      f"{'hs':>7} {'idle':>6} {'peak kW':>8}")
for r in rows:
    infra = "FCC" if int(r["fcc"]) else "SCC"
    print(f"{r['exp']:>3} {r['evs']:>4} {infra:>5} {r['strategy']:>5} "
          f"{float(r['ttr_median_s']):8.0f} {float(r['charge']):7.4f} {float(r['handshake']):7.4f} "
          f"{float(r['idle']):6.3f} {float(r['peak_bin_max_w_median']) / 1e3:8.0f}")

for path in emit_report(read_results(out), out / "figures"):
    print("wrote", path)
