"""End-to-end runs: config + environment script + seed in, persisted artifacts and a report out.

Run directory layout::

    <out>/config.json          copy of the network description
    <out>/env.csv              copy of the environment script
    <out>/scenario.json        duration, seed, scheme (simulated parameters only)
    <out>/hub/ledger.jsonl     the event ledger
    <out>/hub/dead_letter/     batches that exhausted their retries
    <out>/cloud_store/         blob containers, manifest.jsonl, tables/
    <out>/report.json          RunReport (machine-readable)
    <out>/report.txt           RunReport (human-readable)
"""

from __future__ import annotations

import json
import shutil
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any

from . import fixtures
from .cloud import CloudPipeline, FlakyEndpoint, RateCard, UsageCounters, estimate_cost, format_gbp, load_cost_fixture
from .config import load_config
from .hub import Category, Hub
from .kinds import MODULE_NAMES
from .nodes import EnvironmentScript
from .sim import Simulation
from .status import StatusServer
from .vision import Scheme, default_classes

POWER_DECIMALS = 6
BYTES_PER_GB = Decimal(10**9)


@dataclass(frozen=True)
class ScenarioSpec:
    config_path: Path
    env_script_path: Path
    duration_s: int
    seed: int = 0
    acceleration: float | str = "max"
    scheme: Scheme = Scheme.BINARY
    start_s: int = 0

    def __post_init__(self):
        if not isinstance(self.duration_s, int) or isinstance(self.duration_s, bool) or self.duration_s <= 0:
            raise ValueError(f"duration_s must be a positive integer, got {self.duration_s!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.acceleration != "max":
            if isinstance(self.acceleration, str) or not self.acceleration > 0:
                raise ValueError(f"acceleration must be > 0 or 'max', got {self.acceleration!r}")

    @property
    def speedup(self) -> float | None:
        """Simulated seconds per wall second, or None for as fast as possible."""
        return None if self.acceleration == "max" else float(self.acceleration)


@dataclass
class RunReport:
    total: int
    counts: dict[str, int]
    power_mah_per_h: dict[str, dict]
    latencies_s: dict[str, list[int]]
    upload: dict[str, Any]
    pipeline: dict[str, Any]
    images: dict[str, Any]
    cost: dict[str, Any]
    scenario: dict[str, Any]
    meta: dict[str, Any] = field(default_factory=dict)
    # live hub of the run (batches, dead letters); never serialised
    hub: Hub | None = field(default=None, repr=False, compare=False)

    def to_dict(self, with_meta: bool = True) -> dict[str, Any]:
        d = {
            "total": self.total,
            "counts": self.counts,
            "power_mah_per_h": self.power_mah_per_h,
            "latencies_s": self.latencies_s,
            "upload": self.upload,
            "pipeline": self.pipeline,
            "images": self.images,
            "cost": self.cost,
            "scenario": self.scenario,
        }
        if with_meta:
            d["meta"] = self.meta
        return d

    def to_text(self) -> str:
        lines = [f"ledger entries: {self.total}"]
        lines += [f"  {k:<16} {v}" for k, v in self.counts.items()]
        lines.append("power (mAh per hour):")
        for node_id, row in self.power_mah_per_h.items():
            lines.append(f"  {node_id} {row['model']:<10} {row['mah_per_h']:g}")
        lines.append("latency (s):")
        lines += [f"  {k:<24} {','.join(map(str, v))}" for k, v in self.latencies_s.items()]
        u = self.upload
        lines.append(
            f"uploads: {u['succeeded']}/{u['batches']} batches ok, {u['attempts']} attempts, "
            f"{u['dead_letters']} dead-lettered, success ratio {u['success_ratio']:g}"
        )
        p = self.pipeline
        lines.append(f"cloud: {p['blobs']} blobs, {p['parsed_blobs']} parsed, {p['rows']} rows, {p['quarantined_rows']} quarantined")
        im = self.images
        lines.append(f"images: {im['count']} classified by {self.scenario['classifier']}, labels {im['labels']}, accuracy vs ground truth {im['accuracy']}")
        lines.append(f"cost estimate: {self.cost['gbp']} per month")
        return "\n".join(lines) + "\n"


def power_table(config, per_hour: dict[int, float]) -> dict[str, dict]:
    out = {}
    for node in sorted(config.nodes, key=lambda n: n.id):
        out[f"0x{node.id:04X}"] = {
            "kind": node.kind.value,
            "model": MODULE_NAMES[node.kind],
            "mah_per_h": round(per_hour[node.id], POWER_DECIMALS),
        }
    return out


def run_cost(blob_bytes: int, parse_ops: int, rows: int, queries: int, label_records: int) -> dict[str, Any]:
    """Monthly cost of keeping this run's cloud footprint, priced with the bundled rate card."""
    profiles = load_cost_fixture(fixtures.COST_PROFILES)
    rates = RateCard.from_dict(profiles["rate_card"])
    usage_d = {
        "blob_gb_months": str(Decimal(blob_bytes) / BYTES_PER_GB),
        "parse_ops": parse_ops,
        "row_months": rows,
        "queries": queries,
        "label_records": label_records,
    }
    usage = UsageCounters.from_dict({"usage": usage_d, "free_tier": profiles["profiles"]["testing"]["free_tier"]})
    pence = estimate_cost(usage, rates)
    return {"usage": usage_d, "pence": pence, "gbp": format_gbp(pence)}


def _copy_inputs(spec: ScenarioSpec, out: Path, scenario: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(spec.config_path, out / "config.json")
    shutil.copyfile(spec.env_script_path, out / "env.csv")
    (out / "scenario.json").write_text(json.dumps(scenario, indent=2, sort_keys=True) + "\n")


def _prepare_out(out: Path) -> None:
    # a rerun into the same directory must not inherit blobs or tables
    for sub in ("hub", "cloud_store"):
        if (out / sub).exists():
            shutil.rmtree(out / sub)


def run_scenario(
    spec: ScenarioSpec, out_dir: str | Path, serve_port: int | None = None, upload_failures: int = 0
) -> RunReport:
    """Run the whole pipeline and persist every artifact under ``out_dir``.

    ``upload_failures`` makes the first that-many upload attempts of every
    batch fail, to exercise the retry path.

    Raises ConfigError subclasses for invalid inputs and SimulationError for
    faults during the run (naming simulated time and component).
    """
    out = Path(out_dir)
    config = load_config(spec.config_path)
    env = EnvironmentScript.from_csv(spec.env_script_path)
    _prepare_out(out)

    wall0 = time.perf_counter()
    cloud = CloudPipeline(out / "cloud_store")
    endpoint = FlakyEndpoint(cloud, upload_failures) if upload_failures else cloud
    hub = Hub(config, cloud=endpoint, store_dir=out / "hub", start_time=spec.start_s)
    scenario = {
        "duration_s": spec.duration_s,
        "seed": spec.seed,
        "scheme": spec.scheme.name,
        "start_s": spec.start_s,
        "classifier": hub.classifier.name,
    }
    _copy_inputs(spec, out, scenario)
    sim = Simulation(
        config, env, hub, spec.duration_s, seed=spec.seed, scheme=spec.scheme, start=spec.start_s, acceleration=spec.speedup
    )
    server = StatusServer(hub, serve_port) if serve_port is not None else None
    try:
        sim.run()
    finally:
        if server is not None:
            server.close()
        hub.close()
    wall = time.perf_counter() - wall0

    entries = hub.ledger.entries()
    labels: dict[str, int] = {}
    correct = 0
    for e in entries:
        if e.category is Category.IMAGE_CAPTURE:
            labels[e.detail["label"]] = labels.get(e.detail["label"], 0) + 1
            truth = sim.stats.truth[e.detail["value"]]
            correct += e.detail["label"] == _class_name(spec.scheme, truth)
    n_images = sum(labels.values())

    results = hub.results
    ok = sum(1 for r in results if r.success)
    stats = cloud.stats()
    report = RunReport(
        total=len(hub.ledger),
        counts=hub.ledger.counts(),
        power_mah_per_h=power_table(config, sim.power_per_hour()),
        latencies_s={k: sorted(v) for k, v in sorted(sim.stats.latencies.items())},
        upload={
            "batches": len(hub.batches),
            "succeeded": ok,
            "attempts": sum(r.attempts for r in results),
            "dead_letters": len(hub.dead_letters),
            "success_ratio": (ok / len(results)) if results else 1.0,
        },
        pipeline={
            "blobs": stats["blobs"],
            "blob_bytes": stats["blob_bytes"],
            "parsed_blobs": stats["parsed_blobs"],
            "rows": stats["rows"],
            "quarantined_rows": stats["quarantined_rows"],
            "label_records": stats["label_records"],
        },
        images={
            "count": n_images,
            "labels": dict(sorted(labels.items())),
            "accuracy": (correct / n_images) if n_images else None,
        },
        cost=run_cost(stats["blob_bytes"], stats["parsed_blobs"], stats["rows"], cloud.queries_served, stats["label_records"]),
        scenario=scenario,
        meta={"wall_time_s": round(wall, 3), "acceleration": spec.acceleration},
        hub=hub,
    )
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "report.txt").write_text(report.to_text())
    return report


def _class_name(scheme: Scheme, class_id: int) -> str:
    return default_classes(scheme)[class_id]


def museum_spec(seed: int = 0, acceleration: float | str = "max") -> ScenarioSpec:
    """The bundled 24 h museum scenario."""
    return ScenarioSpec(fixtures.MUSEUM_CONFIG, fixtures.MUSEUM_ENV, fixtures.DAY_S, seed, acceleration)
