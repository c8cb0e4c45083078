"""Reports rebuilt from a run directory alone.

Nothing here touches the simulator or the live hub: figures come from
``config.json``, ``env.csv``, ``scenario.json``, the ledger file and the
cloud store on disk. ``derive_report`` therefore doubles as a check that a
run's ``report.json`` is recomputable from what was persisted.
"""

from __future__ import annotations

import bisect
import csv
import json
from collections import Counter
from decimal import Decimal
from pathlib import Path
from typing import Any

from . import fixtures
from .cloud import RateCard, UsageCounters, estimate_cost, format_gbp, load_cost_fixture
from .hub import Category
from .kinds import MODULE_NAMES, TABLE_LATENCY_S, TABLE_RSSI_1M, SensorKind
from .scenario import POWER_DECIMALS, run_cost
from .transport import rssi_dbm
from .vision import Scheme, behaviour_class, default_classes

TABLES = ("readings", "events", "image_labels")


class ReportError(RuntimeError):
    pass


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ReportError(f"{path} missing; is this a run directory?") from None


def read_ledger(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "hub" / "ledger.jsonl"
    if not path.exists():
        raise ReportError(f"{path} missing; is this a run directory?")
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _csv_rows(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class _Env:
    """Minimal step-function view of ``env.csv``."""

    def __init__(self, path: Path):
        rows = _csv_rows(path)
        self.times = [int(r["time_s"]) for r in rows]
        self.rows = rows

    def at(self, t: int) -> dict:
        i = bisect.bisect_right(self.times, t) - 1
        if i < 0:
            raise ReportError(f"environment undefined at t={t}")
        return self.rows[i]


def _camera_activity(ledger: list[dict]) -> dict[int, list[tuple[int, int]]]:
    busy: dict[int, list[tuple[int, int]]] = {}
    for e in ledger:
        d = e["detail"]
        if e["category"] == Category.IMAGE_CAPTURE.value:
            busy.setdefault(e["node_id"], []).append((d["event_time"], e["timestamp"]))
        elif e["category"] == Category.SYSTEM.value and d.get("event") == "image_transfer_failed":
            busy.setdefault(e["node_id"], []).append((e["timestamp"], e["timestamp"] + d["duration_s"]))
    return busy


def _overlap(intervals: list[tuple[int, int]], lo: int, hi: int) -> int:
    return sum(max(0, min(b, hi) - max(a, lo)) for a, b in intervals)


def _power(config: dict, ledger: list[dict], start: int, duration: int) -> dict[str, dict]:
    busy = _camera_activity(ledger)
    out = {}
    for node in sorted(config["nodes"], key=lambda n: n["id"]):
        kind = SensorKind(node["kind"])
        idle = node["power"]["idle_mah_per_h"]
        active = node["power"]["active_mah_per_h"]
        if kind is SensorKind.CAMERA:
            on = _overlap(busy.get(node["id"], []), start, start + duration)
            per_hour = (idle * (duration - on) + active * on) / duration
        else:
            per_hour = active
        out[f"0x{node['id']:04X}"] = {
            "kind": kind.value,
            "model": MODULE_NAMES[kind],
            "mah_per_h": round(per_hour, POWER_DECIMALS),
        }
    return out


def _latencies(ledger: list[dict]) -> dict[str, list[int]]:
    seen: dict[str, set] = {}
    for e in ledger:
        d = e["detail"]
        cat = e["category"]
        if cat == Category.SENSOR_READING.value:
            name = f"{d['kind']}/{d['value_name']}"
        elif cat == Category.TRIGGER.value:
            name = f"{d['kind']}/trigger"
        elif cat == Category.IMAGE_CAPTURE.value:
            name = "camera/image"
        else:
            continue
        seen.setdefault(name, set()).add(e["timestamp"] - d["event_time"])
    return {k: sorted(v) for k, v in sorted(seen.items())}


def _upload(run_dir: Path, ledger: list[dict]) -> dict[str, Any]:
    requests = [e["detail"] for e in ledger if e["category"] == Category.NETWORK_REQUEST.value]
    batches = {r["batch_id"] for r in requests}
    ok = sum(1 for r in requests if r["outcome"] == "ok")
    dead_dir = run_dir / "hub" / "dead_letter"
    dead = len(list(dead_dir.glob("dead_*.csv"))) if dead_dir.exists() else 0
    return {
        "batches": len(batches),
        "succeeded": ok,
        "attempts": len(requests),
        "dead_letters": dead,
        "success_ratio": (ok / len(batches)) if batches else 1.0,
    }


def _pipeline(run_dir: Path) -> dict[str, Any]:
    store = run_dir / "cloud_store"
    manifest = store / "manifest.jsonl"
    receipts = []
    if manifest.exists():
        receipts = [json.loads(line) for line in manifest.read_text(encoding="utf-8").splitlines() if line.strip()]
    keys = {f"{r['container']}/{r['name']}.v{r['version']}" for r in receipts}
    parsed_file = store / "tables" / "_parsed.txt"
    parsed = set(parsed_file.read_text().split()) if parsed_file.exists() else set()
    rows = {t: len(_csv_rows(store / "tables" / f"{t}.csv")) for t in TABLES}
    return {
        "blobs": len(receipts),
        "blob_bytes": sum(r["size"] for r in receipts),
        "parsed_blobs": len(keys & parsed),
        "rows": sum(rows.values()),
        "quarantined_rows": len(_csv_rows(store / "tables" / "quarantine.csv")),
        "label_records": rows["image_labels"],
    }


def _images(run_dir: Path, ledger: list[dict], scheme: Scheme) -> dict[str, Any]:
    env = _Env(run_dir / "env.csv")
    names = default_classes(scheme)
    labels: Counter = Counter()
    correct = 0
    for e in ledger:
        if e["category"] != Category.IMAGE_CAPTURE.value:
            continue
        d = e["detail"]
        labels[d["label"]] += 1
        rec = env.at(d["event_time"])
        truth = behaviour_class(rec["visitor_present"] == "1", float(rec["visitor_distance_cm"]), scheme)
        correct += d["label"] == names[truth]
    n = sum(labels.values())
    return {
        "count": n,
        "labels": dict(sorted(labels.items())),
        "accuracy": (correct / n) if n else None,
    }


def derive_report(run_dir: str | Path) -> dict[str, Any]:
    """Recompute every simulated figure of ``report.json`` from persisted artifacts."""
    run_dir = Path(run_dir)
    config = _read_json(run_dir / "config.json")
    scenario = _read_json(run_dir / "scenario.json")
    ledger = read_ledger(run_dir)
    counts = Counter(e["category"] for e in ledger)
    pipeline = _pipeline(run_dir)
    return {
        "total": len(ledger),
        "counts": {c.value: counts.get(c.value, 0) for c in Category},
        "power_mah_per_h": _power(config, ledger, scenario["start_s"], scenario["duration_s"]),
        "latencies_s": _latencies(ledger),
        "upload": _upload(run_dir, ledger),
        "pipeline": pipeline,
        "images": _images(run_dir, ledger, Scheme[scenario["scheme"]]),
        # queries are never issued during a run
        "cost": run_cost(pipeline["blob_bytes"], pipeline["parsed_blobs"], pipeline["rows"], 0, pipeline["label_records"]),
        "scenario": scenario,
    }


def emitted_report(run_dir: str | Path) -> dict[str, Any]:
    """``report.json`` without its wall-clock metadata."""
    d = _read_json(Path(run_dir) / "report.json")
    d.pop("meta", None)
    return d


def report_mismatches(run_dir: str | Path) -> list[str]:
    """Fields where the emitted report and the re-derived one disagree."""
    emitted = emitted_report(run_dir)
    derived = json.loads(json.dumps(derive_report(run_dir)))
    keys = sorted(set(emitted) | set(derived))
    return [k for k in keys if emitted.get(k) != derived.get(k)]


# --------------------------------------------------------------------------
# text reports; each also writes its JSON beside the run


def _write_json(run_dir: Path, name: str, data: Any) -> None:
    (run_dir / name).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _latency_cell(kind: SensorKind) -> str:
    s = TABLE_LATENCY_S[kind]
    if kind is SensorKind.TEMPERATURE_HUMIDITY:
        return f"{s} s ({2 * s} for both values)"
    return f"{s} s"


def report_power(run_dir: str | Path) -> tuple[str, list[dict]]:
    """Per-node hourly consumption laid out like a hardware summary table."""
    run_dir = Path(run_dir)
    config = _read_json(run_dir / "config.json")
    scenario = _read_json(run_dir / "scenario.json")
    power = _power(config, read_ledger(run_dir), scenario["start_s"], scenario["duration_s"])
    rows = []
    for node in sorted(config["nodes"], key=lambda n: n["id"]):
        kind = SensorKind(node["kind"])
        key = f"0x{node['id']:04X}"
        rows.append(
            {
                "node": key,
                "module": MODULE_NAMES[kind],
                "transport": node["transport"],
                "mah_per_h": power[key]["mah_per_h"],
                "latency": _latency_cell(kind),
                "rssi_1m_dbm": rssi_dbm(TABLE_RSSI_1M[kind], 1.0) if kind in TABLE_RSSI_1M else None,
            }
        )
    header = f"{'node':<8}{'module':<10}{'link':<6}{'mAh/h':>12}  {'runtime':<26}{'RSSI 1m':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        rssi = "n/a" if r["rssi_1m_dbm"] is None else f"{r['rssi_1m_dbm']} dBm"
        lines.append(f"{r['node']:<8}{r['module']:<10}{r['transport']:<6}{r['mah_per_h']:>12g}  {r['latency']:<26}{rssi:>8}")
    _write_json(run_dir, "power_report.json", rows)
    return "\n".join(lines) + "\n", rows


def report_ledger(run_dir: str | Path) -> tuple[str, dict]:
    run_dir = Path(run_dir)
    ledger = read_ledger(run_dir)
    counts = Counter(e["category"] for e in ledger)
    data = {"total": len(ledger), "counts": {c.value: counts.get(c.value, 0) for c in Category}}
    lines = [f"{'category':<16}{'entries':>8}{'share':>9}"]
    for name, n in data["counts"].items():
        share = 100 * n / len(ledger) if ledger else 0.0
        lines.append(f"{name:<16}{n:>8}{share:>8.2f}%")
    lines.append(f"{'total':<16}{len(ledger):>8}")
    _write_json(run_dir, "ledger_report.json", data)
    return "\n".join(lines) + "\n", data


def profile_costs(path: str | Path = fixtures.COST_PROFILES) -> dict[str, dict]:
    """Monthly cost of every usage profile in a cost fixture."""
    fixture = load_cost_fixture(path)
    rates = RateCard.from_dict(fixture["rate_card"])
    out = {}
    for name, profile in sorted(fixture["profiles"].items()):
        pence = estimate_cost(UsageCounters.from_dict(profile), rates)
        out[name] = {"pence": pence, "gbp": format_gbp(pence)}
    return out


def report_cost(run_dir: str | Path) -> tuple[str, dict]:
    run_dir = Path(run_dir)
    p = _pipeline(run_dir)
    data = {
        "run": run_cost(p["blob_bytes"], p["parsed_blobs"], p["rows"], 0, p["label_records"]),
        "profiles": profile_costs(),
    }
    gb = Decimal(data["run"]["usage"]["blob_gb_months"])
    lines = [
        f"this run: {data['run']['gbp']} per month "
        f"({gb:.6f} GB stored, {p['parsed_blobs']} parses, {p['rows']} rows, {p['label_records']} labels)"
    ]
    lines += [f"profile {name}: {v['gbp']} per month" for name, v in data["profiles"].items()]
    _write_json(run_dir, "cost_report.json", data)
    return "\n".join(lines) + "\n", data
