"""Upload retries and the dead-letter store.

With retry limit 3 each batch gets four attempts. Two injected failures per
batch still deliver everything; four exhaust the budget and every batch is
parked on disk instead.
"""

import logging
import tempfile
from pathlib import Path

from heritage_wsn import fixtures
from heritage_wsn.scenario import ScenarioSpec, run_scenario

logging.disable(logging.ERROR)  # the per-batch dead-letter errors are expected here

root = Path(tempfile.mkdtemp(prefix="faults_"))
spec = ScenarioSpec(fixtures.MUSEUM_CONFIG, fixtures.MUSEUM_ENV, 3600, start_s=fixtures.OPENING_S)

print(f"{'failures/batch':>15}{'batches':>9}{'delivered':>11}{'requests':>10}{'dead letters':>14}")
for failures in (0, 2, 4):
    rep = run_scenario(spec, root / f"f{failures}", upload_failures=failures)
    u = rep.upload
    print(f"{failures:>15}{u['batches']:>9}{u['succeeded']:>11}{rep.counts['NETWORK_REQUEST']:>10}{u['dead_letters']:>14}")

parked = sorted(p.name for p in (root / "f4" / "hub" / "dead_letter").iterdir())
print(f"\nparked batches: {parked[:3]} ... ({len(parked)} files)")
