"""Watch a running hub through its status endpoint, and add a camera
half-way through a run.

Before the camera arrives, triggers are logged as failed capture commands.
Afterwards each trigger yields a classified frame.
"""

import dataclasses
import json
import tempfile
import urllib.request

from heritage_wsn import fixtures
from heritage_wsn.cloud import CloudPipeline
from heritage_wsn.config import ChangeSet, load_config, validate_config
from heritage_wsn.hub import Category, Hub
from heritage_wsn.kinds import SensorKind
from heritage_wsn.nodes import EnvironmentScript
from heritage_wsn.sim import Simulation
from heritage_wsn.status import serve_status

full = load_config(fixtures.MUSEUM_CONFIG)
camera = next(n for n in full.nodes if n.kind is SensorKind.CAMERA)
# no filler padding for a two-hour window
hub_settings = dataclasses.replace(full.hub, system_filler_entries=0)
config = validate_config(dataclasses.replace(full, hub=hub_settings, nodes=tuple(n for n in full.nodes if n is not camera)))

env = EnvironmentScript.from_csv(fixtures.MUSEUM_ENV)
hub = Hub(config, cloud=CloudPipeline(tempfile.mkdtemp(prefix="reconf_")))
start = fixtures.OPENING_S
sim = Simulation(config, env, hub, 7200, start=start)
sim.schedule_change(start + 3600, ChangeSet(added=(camera,)))

with serve_status(hub) as server:
    sim.run()
    with urllib.request.urlopen(server.url + "/status") as resp:
        status = json.load(resp)
    with urllib.request.urlopen(server.url + f"/ledger?from={len(hub.ledger) - 3}") as resp:
        tail = resp.read().decode().splitlines()

print("status:", json.dumps(status["counts"]), "total", status["total_entries"])
print("last three ledger lines:")
for line in tail:
    print("  " + line)

entries = hub.ledger.entries()
failed = [e for e in entries if e.detail.get("event") == "capture_command_failed"]
frames = [e for e in entries if e.category is Category.IMAGE_CAPTURE]
print(f"\nbefore the camera joined: {len(failed)} failed capture commands")
print(f"after: {len(frames)} frames, first at t={frames[0].timestamp if frames else None}")
