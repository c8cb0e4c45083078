"""Query the record store a run leaves behind and price the cloud footprint."""

import tempfile
from pathlib import Path

from heritage_wsn import fixtures
from heritage_wsn.cloud import CloudPipeline
from heritage_wsn.report import profile_costs
from heritage_wsn.scenario import ScenarioSpec, run_scenario

out = Path(tempfile.mkdtemp(prefix="cloud_"))
spec = ScenarioSpec(fixtures.MUSEUM_CONFIG, fixtures.MUSEUM_ENV, 7200, start_s=fixtures.OPENING_S)
report = run_scenario(spec, out)

cloud = CloudPipeline(out / "cloud_store")
print("stats:", cloud.stats())

warmest = cloud.query("readings", [("value_name", "=", "temperature_c")], order_by="value", descending=True, limit=3)
print("\nwarmest readings:")
for row in warmest:
    print(f"  t={row['timestamp_s']:>6}  {row['value']:.2f} C  from {row['provenance']}")

risky = cloud.query("image_labels", {"label": "risky"})
print(f"\n{len(risky)} risky frames, first at t={risky[0]['timestamp_s']}" if risky else "\nno risky frames")

print(f"\nthis run: {report.cost['gbp']} per month")
for name, cost in profile_costs().items():
    print(f"profile {name}: {cost['gbp']} per month")
