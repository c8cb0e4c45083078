"""Replay the bundled 24-hour museum day and print what the hub recorded.

The run directory holds the ledger, the cloud store and report.json. The
report tool rebuilds every figure from those files alone.
"""

import sys
import tempfile
from pathlib import Path

from heritage_wsn.report import report_cost, report_ledger, report_mismatches, report_power
from heritage_wsn.scenario import museum_spec, run_scenario

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="museum_"))
report = run_scenario(museum_spec(seed=0), out)
print(report.to_text())
print(f"(simulated 86400 s in {report.meta['wall_time_s']} s of wall time)\n")

for fn in (report_ledger, report_power, report_cost):
    text, _ = fn(out)
    print(text)

mismatches = report_mismatches(out)
print("re-derived report matches the emitted one" if not mismatches else f"mismatched fields: {mismatches}")
print(f"artifacts in {out}")
