"""Show that no camera frame survives a run, then plant one to show the audit
would notice.

The audit regenerates each frame from the ledger and the environment script,
takes a 16-byte fingerprint of its pixels, and searches every persisted file
plus the in-memory upload batches for it.
"""

import json
import tempfile
from pathlib import Path

from heritage_wsn.audit import audit_run
from heritage_wsn.config import load_config
from heritage_wsn.nodes import EnvironmentScript, capture_image
from heritage_wsn.scenario import museum_spec, run_scenario

out = Path(tempfile.mkdtemp(prefix="audit_"))
report = run_scenario(museum_spec(seed=0), out)
live = [(b.name, b.records_csv) for b in report.hub.batches]

result = audit_run(out, live)
print(f"{result.images} frames, {result.files_scanned} files, {len(live)} live batches: "
      f"{len(result.hits)} hits -> {'clean' if result.clean else 'LEAK'}")

# negative control: write one regenerated frame where it should never be
entry = next(e for e in map(json.loads, (out / "hub" / "ledger.jsonl").read_text().splitlines())
             if e["category"] == "IMAGE_CAPTURE")
camera = {n.id: n for n in load_config(out / "config.json").nodes}[entry["node_id"]]
frame = capture_image(camera, EnvironmentScript.from_csv(out / "env.csv"), entry["detail"]["event_time"])
(out / "hub" / "stray_frame.bin").write_bytes(bytes(frame.payload))

result = audit_run(out, live)
print(f"after planting one frame: {result.hits} -> {'clean' if result.clean else 'LEAK detected'}")
