"""Edge hub: categorized event ledger, camera coupling, classify-and-purge,
windowed batch compilation and retrying upload to the cloud."""

from __future__ import annotations

import bisect
import csv
import enum
import io
import json
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from .cloud import BATCH_HEADER, CloudError, Receipt
from .config import ChangeSet, NodeSpec, ValidatedConfig, apply_changes
from .kinds import SensorKind
from .nodes import ImageCapture, SensorReading, TriggerEvent
from .vision import BehaviorLabel, Classifier, OracleClassifier

log = logging.getLogger(__name__)


class Category(str, enum.Enum):
    ROUTINE_CHECK = "ROUTINE_CHECK"
    TRIGGER = "TRIGGER"
    SENSOR_READING = "SENSOR_READING"
    NETWORK_REQUEST = "NETWORK_REQUEST"
    IMAGE_CAPTURE = "IMAGE_CAPTURE"
    SYSTEM = "SYSTEM"


BATCHED_CATEGORIES = (Category.SENSOR_READING, Category.TRIGGER, Category.IMAGE_CAPTURE)


class LedgerStorageError(RuntimeError):
    pass


@dataclass(frozen=True)
class LedgerEntry:
    seq: int
    timestamp: int
    category: Category
    node_id: int | None
    detail: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "timestamp": self.timestamp,
                "category": self.category.value,
                "node_id": self.node_id,
                "detail": self.detail,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> LedgerEntry:
        d = json.loads(line)
        return cls(d["seq"], d["timestamp"], Category(d["category"]), d["node_id"], d["detail"])


class EventLedger:
    """Append-only, gap-free log. Entry ``k`` has ``seq == k``.

    With ``path`` set, each entry is written through to a JSON-lines file
    before it becomes visible; a write failure is fatal.
    """

    def __init__(self, path: str | Path | None = None):
        self._entries: list[LedgerEntry] = []
        self._times: list[int] = []
        self._counts = {c: 0 for c in Category}
        self._lock = threading.RLock()
        self._path = Path(path) if path else None
        self._fh = None
        if self._path:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self._path, "w", encoding="utf-8")

    def append(self, timestamp: int, category: Category, node_id: int | None, detail: dict | None = None) -> LedgerEntry:
        with self._lock:
            if self._times and timestamp < self._times[-1]:
                raise ValueError(f"ledger timestamps must not decrease ({timestamp} < {self._times[-1]})")
            entry = LedgerEntry(len(self._entries), timestamp, category, node_id, detail or {})
            if self._fh is not None:
                try:
                    self._fh.write(entry.to_json() + "\n")
                except OSError as exc:
                    raise LedgerStorageError(f"ledger write failed at seq {entry.seq}: {exc}") from exc
            self._entries.append(entry)
            self._times.append(timestamp)
            self._counts[category] += 1
            return entry

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i: int) -> LedgerEntry:
        return self._entries[i]

    def entries(self, from_seq: int = 0) -> list[LedgerEntry]:
        with self._lock:
            return self._entries[from_seq:]

    def window(self, start: int, end: int) -> list[LedgerEntry]:
        """Entries with ``start < timestamp <= end``."""
        with self._lock:
            lo = bisect.bisect_right(self._times, start)
            hi = bisect.bisect_right(self._times, end)
            return self._entries[lo:hi]

    def counts(self) -> dict[str, int]:
        with self._lock:
            return {c.value: n for c, n in self._counts.items()}

    def scan_counts(self) -> dict[str, int]:
        """Category totals from a full pass over the entries."""
        with self._lock:
            out = {c.value: 0 for c in Category}
            for e in self._entries:
                out[e.category.value] += 1
            return out

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    @property
    def lock(self) -> threading.RLock:
        return self._lock


# --------------------------------------------------------------------------
# batches


@dataclass
class UploadBatch:
    batch_id: int
    window: tuple[int, int]
    records_csv: bytes
    image_labels: list[tuple[str, str, float]]
    attempt_count: int = 0

    @property
    def name(self) -> str:
        return f"batch_{self.batch_id:06d}.csv"

    @property
    def row_count(self) -> int:
        return max(self.records_csv.count(b"\n") - 1, 0)


@dataclass(frozen=True)
class UploadResult:
    batch_id: int
    success: bool
    attempts: int
    receipt: Receipt | None = None
    error: str = ""


def _csv_row(e: LedgerEntry) -> list:
    d = e.detail
    return [
        e.seq,
        e.timestamp,
        e.category.value,
        e.node_id,
        d.get("kind", ""),
        d.get("value_name", ""),
        d.get("value", ""),
        d.get("label", ""),
        d.get("confidence", ""),
    ]


def batch_csv(entries: list[LedgerEntry]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(BATCH_HEADER)
    for e in entries:
        if e.category in BATCHED_CATEGORIES:
            w.writerow(_csv_row(e))
    return buf.getvalue().encode("utf-8")


class CloudEndpoint(Protocol):
    def upload(self, name: str, data: bytes, now: int) -> Receipt: ...


@dataclass(frozen=True)
class CaptureCommand:
    camera_id: int
    trigger_node: int
    issued_at: int


@dataclass
class StatusReport:
    uptime_s: int
    counts: dict[str, int]
    total_entries: int
    last_reading: dict[str, dict]
    upload_queue_depth: int
    dead_letters: int
    classifier: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "uptime_s": self.uptime_s,
            "counts": self.counts,
            "total_entries": self.total_entries,
            "last_reading": self.last_reading,
            "upload_queue_depth": self.upload_queue_depth,
            "dead_letters": self.dead_letters,
            "classifier": self.classifier,
        }


@dataclass
class Hub:
    """The edge hub. Everything runs on the caller's simulated clock."""

    config: ValidatedConfig
    cloud: CloudEndpoint | None = None
    classifier: Classifier = field(default_factory=OracleClassifier)
    store_dir: Path | None = None
    start_time: int = 0

    def __post_init__(self):
        if self.store_dir is not None:
            self.store_dir = Path(self.store_dir)
            self.store_dir.mkdir(parents=True, exist_ok=True)
        self.ledger = EventLedger(self.store_dir / "ledger.jsonl" if self.store_dir else None)
        self.registry: dict[int, NodeSpec] = {n.id: n for n in self.config.nodes}
        self.retry_limit = self.config.hub.upload_retry_limit
        self.capture_policy = self.config.hub.capture_policy
        self.pending_captures: deque[CaptureCommand] = deque()
        self.upload_queue: deque[UploadBatch] = deque()
        self.dead_letters: list[UploadBatch] = []
        self.batches: list[UploadBatch] = []
        self.results: list[UploadResult] = []
        self.last_reading: dict[int, dict] = {}
        self.now = self.start_time
        self._next_batch_id = 1

    def advance(self, now: int) -> None:
        self.now = max(self.now, now)

    # ingestion -----------------------------------------------------------

    def ingest(self, delivery: SensorReading | TriggerEvent | ImageCapture, now: int) -> LedgerEntry:
        self.now = max(self.now, now)
        if isinstance(delivery, SensorReading):
            detail = {
                "kind": delivery.kind.value,
                "value_name": delivery.value_name,
                "value": delivery.value,
                "event_time": delivery.timestamp,
            }
            with self.ledger.lock:
                entry = self.ledger.append(now, Category.SENSOR_READING, delivery.node_id, detail)
                self.last_reading[delivery.node_id] = {
                    "timestamp": delivery.timestamp,
                    "value_name": delivery.value_name,
                    "value": delivery.value,
                }
            return entry
        if isinstance(delivery, TriggerEvent):
            detail = {
                "kind": delivery.kind.value,
                "value_name": "cause",
                "value": delivery.cause.name,
                "event_time": delivery.timestamp,
            }
            entry = self.ledger.append(now, Category.TRIGGER, delivery.node_id, detail)
            self._command_capture(delivery.node_id, now)
            return entry
        if isinstance(delivery, ImageCapture):
            image_id = delivery.image_id
            label, confidence = self.classify_and_purge(delivery, self.classifier)
            detail = {
                "kind": SensorKind.CAMERA.value,
                "value_name": "image_id",
                "value": image_id,
                "label": label.name,
                "confidence": round(confidence, 6),
                "event_time": delivery.timestamp,
            }
            return self.ledger.append(now, Category.IMAGE_CAPTURE, delivery.node_id, detail)
        raise TypeError(f"cannot ingest {type(delivery).__name__}")

    def _cameras(self) -> list[NodeSpec]:
        return [n for n in self.registry.values() if n.kind is SensorKind.CAMERA]

    def _command_capture(self, trigger_node: int, now: int) -> None:
        cameras = self._cameras()
        if not cameras:
            self.ledger.append(
                now,
                Category.SYSTEM,
                trigger_node,
                {"event": "capture_command_failed", "reason": "no camera registered"},
            )
            return
        if self.capture_policy == "all":
            chosen = sorted(cameras, key=lambda c: c.id)
        else:
            origin = self.registry.get(trigger_node)
            ref = origin.distance_m if origin else 0.0
            chosen = [min(cameras, key=lambda c: (abs(c.distance_m - ref), c.id))]
        for cam in chosen:
            self.pending_captures.append(CaptureCommand(cam.id, trigger_node, now))

    def routine_check(self, node: NodeSpec, now: int) -> LedgerEntry:
        if node.id not in self.registry:
            raise KeyError(f"node 0x{node.id:04X} not registered")
        self.now = max(self.now, now)
        return self.ledger.append(now, Category.ROUTINE_CHECK, node.id, {"kind": node.kind.value})

    def log_system(self, now: int, detail: dict, node_id: int | None = None) -> LedgerEntry:
        self.now = max(self.now, now)
        return self.ledger.append(now, Category.SYSTEM, node_id, detail)

    def classify_and_purge(self, img: ImageCapture, clf: Classifier) -> tuple[BehaviorLabel, float]:
        """Label the frame, then destroy its bytes whatever the classifier did."""
        try:
            label, confidence = clf.predict(img.payload)
        except Exception as exc:  # noqa: BLE001 - any classifier fault degrades to UNKNOWN
            log.warning("classifier %s failed on %s: %s", clf.name, img.image_id, exc)
            label, confidence = BehaviorLabel.unknown(), 0.0
        finally:
            img.purge()
        return label, confidence

    # batching and upload ---------------------------------------------------

    def compile_batch(self, window: tuple[int, int]) -> UploadBatch:
        start, end = window
        if end > self.now:
            raise ValueError(f"window end {end} is in the future (now={self.now})")
        entries = [e for e in self.ledger.window(start, end) if e.category in BATCHED_CATEGORIES]
        labels = [
            (e.detail["value"], e.detail["label"], e.detail["confidence"])
            for e in entries
            if e.category is Category.IMAGE_CAPTURE
        ]
        batch = UploadBatch(self._next_batch_id, (start, end), batch_csv(entries), labels)
        self._next_batch_id += 1
        self.batches.append(batch)
        self.upload_queue.append(batch)
        return batch

    def flush_uploads(self, now: int) -> list[UploadResult]:
        """Push every queued batch, retrying up to ``retry_limit`` extra times."""
        self.now = max(self.now, now)
        results = []
        while self.upload_queue:
            batch = self.upload_queue.popleft()
            results.append(self._upload(batch, now))
        self.results.extend(results)
        return results

    def _upload(self, batch: UploadBatch, now: int) -> UploadResult:
        error = ""
        while batch.attempt_count <= self.retry_limit:
            batch.attempt_count += 1
            try:
                if self.cloud is None:
                    raise CloudError("no cloud endpoint configured")
                receipt = self.cloud.upload(batch.name, batch.records_csv, now)
            except CloudError as exc:
                error = str(exc)
                self.ledger.append(
                    now,
                    Category.NETWORK_REQUEST,
                    None,
                    {"batch_id": batch.batch_id, "attempt": batch.attempt_count, "outcome": "failed", "error": error},
                )
                continue
            self.ledger.append(
                now,
                Category.NETWORK_REQUEST,
                None,
                {"batch_id": batch.batch_id, "attempt": batch.attempt_count, "outcome": "ok", "blob": receipt.key},
            )
            return UploadResult(batch.batch_id, True, batch.attempt_count, receipt)
        self._dead_letter(batch)
        return UploadResult(batch.batch_id, False, batch.attempt_count, error=error)

    def _dead_letter(self, batch: UploadBatch) -> None:
        log.error("batch %d exhausted %d attempts; parked in dead-letter store", batch.batch_id, batch.attempt_count)
        self.dead_letters.append(batch)
        if self.store_dir is not None:
            directory = self.store_dir / "dead_letter"
            directory.mkdir(exist_ok=True)
            (directory / f"dead_{batch.batch_id}.csv").write_bytes(batch.records_csv)

    # status and reconfiguration -------------------------------------------

    def status_snapshot(self, now: int | None = None) -> StatusReport:
        now = self.now if now is None else now
        with self.ledger.lock:
            counts = self.ledger.counts()
            return StatusReport(
                uptime_s=now - self.start_time,
                counts=counts,
                total_entries=len(self.ledger),
                last_reading={f"0x{k:04X}": dict(v) for k, v in sorted(self.last_reading.items())},
                upload_queue_depth=len(self.upload_queue),
                dead_letters=len(self.dead_letters),
                classifier=self.classifier.name,
            )

    def apply_config_change(self, change: ChangeSet) -> dict[int, NodeSpec]:
        """Swap the node registry atomically; unknown ids reject the whole change."""
        nodes = apply_changes(tuple(self.registry.values()), change)
        self.registry = {n.id: n for n in nodes}
        return dict(self.registry)

    def close(self) -> None:
        self.ledger.close()
