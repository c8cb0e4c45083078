"""File-backed stand-in for the cloud tier: blob storage, a batch parser feeding
a small relational record store, structured queries and a monthly cost model.

On-disk layout under the store root::

    <container>/<name>.v<version>     blob bytes
    manifest.jsonl                    one receipt per put
    tables/<table>.csv                append-only tables with a provenance column
    tables/_parsed.txt                blob versions already parsed
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import operator
import os
import threading
from dataclasses import asdict, dataclass, field, fields
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Iterable

BATCH_HEADER = ["seq", "timestamp_s", "category", "node_id", "kind", "value_name", "value", "label", "confidence"]

TABLE_SCHEMAS: dict[str, dict[str, type]] = {
    "readings": {"node_id": int, "timestamp_s": int, "kind": str, "value_name": str, "value": float},
    "events": {"node_id": int, "timestamp_s": int, "category": str, "detail": str},
    "image_labels": {"image_id": str, "timestamp_s": int, "label": str, "confidence": float},
}
QUARANTINE_COLUMNS = ["provenance", "reason", "raw"]

CATEGORY_TABLE = {"SENSOR_READING": "readings", "TRIGGER": "events", "IMAGE_CAPTURE": "image_labels"}


class CloudError(Exception):
    pass


class UploadError(CloudError):
    pass


class QueryError(CloudError):
    pass


@dataclass(frozen=True)
class Receipt:
    container: str
    name: str
    version: int
    checksum: str
    size: int
    uploaded_at: int

    @property
    def key(self) -> str:
        return f"{self.container}/{self.name}.v{self.version}"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class BlobStore:
    """Versioned blobs, one directory per container, with a receipt manifest."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._manifest = self.root / "manifest.jsonl"
        self._lock = threading.Lock()
        self._receipts: list[Receipt] = []
        self._fail_next = 0
        if self._manifest.exists():
            with open(self._manifest, encoding="utf-8") as fh:
                self._receipts = [Receipt(**json.loads(line)) for line in fh if line.strip()]

    def inject_failures(self, n: int) -> None:
        """Make the next ``n`` puts fail as if the storage medium were down."""
        self._fail_next = n

    def put_blob(self, container: str, name: str, data: bytes, uploaded_at: int = 0) -> Receipt:
        if "/" in container or "/" in name or not container or not name:
            raise UploadError(f"invalid blob address {container!r}/{name!r}")
        with self._lock:
            if self._fail_next > 0:
                self._fail_next -= 1
                raise UploadError(f"storage unavailable for {container}/{name}")
            version = 1 + sum(1 for r in self._receipts if r.container == container and r.name == name)
            directory = self.root / container
            directory.mkdir(exist_ok=True)
            target = directory / f"{name}.v{version}"
            tmp = target.with_suffix(target.suffix + ".tmp")
            try:
                with open(tmp, "wb") as fh:
                    fh.write(data)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, target)
            except OSError as exc:
                raise UploadError(f"storage failure writing {target}: {exc}") from exc
            receipt = Receipt(container, name, version, _sha256(data), len(data), uploaded_at)
            with open(self._manifest, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(receipt), sort_keys=True) + "\n")
            self._receipts.append(receipt)
            return receipt

    def receipt(self, container: str, name: str, version: int | None = None) -> Receipt:
        matches = [r for r in self._receipts if r.container == container and r.name == name]
        if not matches:
            raise KeyError(f"{container}/{name}")
        if version is None:
            return matches[-1]
        for r in matches:
            if r.version == version:
                return r
        raise KeyError(f"{container}/{name}.v{version}")

    def get_blob(self, container: str, name: str, version: int | None = None) -> bytes:
        r = self.receipt(container, name, version)
        data = (self.root / container / f"{name}.v{r.version}").read_bytes()
        if _sha256(data) != r.checksum:
            raise CloudError(f"checksum mismatch for {r.key}")
        return data

    def versions(self, container: str, name: str) -> list[int]:
        return [r.version for r in self._receipts if r.container == container and r.name == name]

    def receipts(self) -> list[Receipt]:
        return list(self._receipts)


# --------------------------------------------------------------------------
# record store


def _column_type(table: str, column: str) -> type:
    if column == "provenance":
        return str
    try:
        return TABLE_SCHEMAS[table][column]
    except KeyError:
        raise QueryError(f"unknown field {column!r} for table {table!r}") from None


@dataclass
class ParseResult:
    blob: str
    inserted: dict[str, int] = field(default_factory=dict)
    quarantined: int = 0
    already_parsed: bool = False
    failed: bool = False


class RecordStore:
    """Append-only CSV tables; every row carries the blob row it came from."""

    def __init__(self, root: str | Path):
        self.root = Path(root) / "tables"
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._rows: dict[str, list[dict]] = {t: [] for t in TABLE_SCHEMAS}
        self._quarantine: list[dict] = []
        self._parsed: set[str] = set()
        for table, schema in TABLE_SCHEMAS.items():
            path = self.root / f"{table}.csv"
            if path.exists():
                with open(path, newline="", encoding="utf-8") as fh:
                    for row in csv.DictReader(fh):
                        typed = {c: t(row[c]) for c, t in schema.items()}
                        typed["provenance"] = row["provenance"]
                        self._rows[table].append(typed)
        qpath = self.root / "quarantine.csv"
        if qpath.exists():
            with open(qpath, newline="", encoding="utf-8") as fh:
                self._quarantine = list(csv.DictReader(fh))
        parsed = self.root / "_parsed.txt"
        if parsed.exists():
            self._parsed = {line.strip() for line in parsed.read_text().splitlines() if line.strip()}

    def _append(self, table: str, columns: list[str], rows: list[dict]) -> None:
        path = self.root / f"{table}.csv"
        new = not path.exists()
        with open(path, "a", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            if new:
                w.writeheader()
            w.writerows(rows)

    def is_parsed(self, key: str) -> bool:
        return key in self._parsed

    def ingest_blob(self, key: str, data: bytes) -> ParseResult:
        """Route each batch-CSV row into its table; bad rows go to quarantine."""
        with self._lock:
            result = ParseResult(blob=key, inserted={t: 0 for t in TABLE_SCHEMAS})
            if key in self._parsed:
                result.already_parsed = True
                return result
            staged: dict[str, list[dict]] = {t: [] for t in TABLE_SCHEMAS}
            bad: list[dict] = []
            try:
                reader = csv.reader(io.StringIO(data.decode("utf-8"), newline=""))
                header = next(reader, None)
            except UnicodeDecodeError as exc:
                header, reader = None, iter(())
                bad.append({"provenance": f"{key}:0", "reason": f"not UTF-8: {exc}", "raw": ""})
            if header != BATCH_HEADER:
                result.failed = True
                if not bad:
                    bad.append({"provenance": f"{key}:0", "reason": "unexpected header", "raw": json.dumps(header)})
            else:
                for lineno, raw in enumerate(reader, start=1):
                    prov = f"{key}:{lineno}"
                    try:
                        table, row = _row_to_record(raw)
                    except (ValueError, KeyError) as exc:
                        bad.append({"provenance": prov, "reason": str(exc), "raw": json.dumps(raw)})
                        continue
                    row["provenance"] = prov
                    staged[table].append(row)
            for table, rows in staged.items():
                if rows:
                    self._append(table, [*TABLE_SCHEMAS[table], "provenance"], rows)
                    self._rows[table].extend(rows)
                    result.inserted[table] = len(rows)
            if bad:
                self._append("quarantine", QUARANTINE_COLUMNS, bad)
                self._quarantine.extend(bad)
            result.quarantined = len(bad)
            with open(self.root / "_parsed.txt", "a", encoding="utf-8") as fh:
                fh.write(key + "\n")
            self._parsed.add(key)
            return result

    def rows(self, table: str) -> list[dict]:
        if table not in TABLE_SCHEMAS:
            raise QueryError(f"unknown table {table!r}")
        return [dict(r) for r in self._rows[table]]

    def quarantine(self) -> list[dict]:
        return list(self._quarantine)

    def row_count(self) -> int:
        return sum(len(v) for v in self._rows.values())


def _row_to_record(raw: list[str]) -> tuple[str, dict]:
    if len(raw) != len(BATCH_HEADER):
        raise ValueError(f"expected {len(BATCH_HEADER)} columns, got {len(raw)}")
    rec = dict(zip(BATCH_HEADER, raw))
    category = rec["category"]
    if category not in CATEGORY_TABLE:
        raise ValueError(f"unroutable category {category!r}")
    table = CATEGORY_TABLE[category]
    node_id = int(rec["node_id"])
    ts = int(rec["timestamp_s"])
    if table == "readings":
        return table, {
            "node_id": node_id,
            "timestamp_s": ts,
            "kind": rec["kind"],
            "value_name": rec["value_name"],
            "value": float(rec["value"]),
        }
    if table == "events":
        return table, {
            "node_id": node_id,
            "timestamp_s": ts,
            "category": category,
            "detail": f"{rec['kind']}:{rec['value_name']}={rec['value']}",
        }
    if not rec["value"]:
        raise ValueError("image row without image_id")
    return table, {
        "image_id": rec["value"],
        "timestamp_s": ts,
        "label": rec["label"],
        "confidence": float(rec["confidence"]),
    }


_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def parse_where(expr: str) -> tuple[str, str, str]:
    """``"kind=dht22"`` -> ``("kind", "=", "dht22")``; also ``!=, <=, >=, <, >``."""
    for op in ("!=", "<=", ">=", "=", "<", ">"):
        if op in expr:
            name, value = expr.split(op, 1)
            return name.strip(), op, value.strip()
    raise QueryError(f"cannot parse predicate {expr!r}")


# --------------------------------------------------------------------------
# pipeline facade


class CloudPipeline:
    """Blob upload, parse-on-arrival and query over one store root."""

    container = "batches"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.blobs = BlobStore(self.root)
        self.records = RecordStore(self.root)
        self.queries_served = 0

    def put_blob(self, container: str, name: str, data: bytes, uploaded_at: int = 0) -> Receipt:
        return self.blobs.put_blob(container, name, data, uploaded_at)

    def parse_blob(self, container: str, name: str, version: int | None = None) -> ParseResult:
        r = self.blobs.receipt(container, name, version)
        return self.records.ingest_blob(r.key, self.blobs.get_blob(container, name, r.version))

    def upload(self, name: str, data: bytes, now: int) -> Receipt:
        receipt = self.put_blob(self.container, name, data, now)
        self.parse_blob(self.container, name, receipt.version)
        return receipt

    def query(
        self,
        table: str,
        where: Iterable[tuple[str, str, Any]] | dict | None = None,
        order_by: str | None = None,
        descending: bool = False,
        limit: int | None = None,
    ) -> list[dict]:
        """Rows of ``table`` satisfying every predicate, ordered then limited.

        ``where`` is a mapping (equality) or triples ``(field, op, value)``;
        values are coerced to the column type. Without ``order_by`` rows come
        back in insertion order.
        """
        rows = self.records.rows(table)
        if isinstance(where, dict):
            where = [(k, "=", v) for k, v in where.items()]
        preds = []
        for name, op, value in where or ():
            if op not in _OPS:
                raise QueryError(f"unknown operator {op!r}")
            preds.append((name, _OPS[op], _column_type(table, name)(value)))
        if order_by is not None:
            _column_type(table, order_by)
        out = [r for r in rows if all(fn(r[name], v) for name, fn, v in preds)]
        if order_by is not None:
            out.sort(key=lambda r: r[order_by], reverse=descending)
        if limit is not None:
            out = out[:limit]
        self.queries_served += 1
        return out

    def stats(self) -> dict:
        receipts = self.blobs.receipts()
        parsed = sum(1 for r in receipts if self.records.is_parsed(r.key))
        failed_blobs = {q["provenance"].rsplit(":", 1)[0] for q in self.records.quarantine() if q["provenance"].endswith(":0")}
        return {
            "blobs": len(receipts),
            "blob_bytes": sum(r.size for r in receipts),
            "parsed_blobs": parsed,
            "blob_parse_failure_rate": (len(failed_blobs) / parsed) if parsed else 0.0,
            "rows": self.records.row_count(),
            "quarantined_rows": len(self.records.quarantine()),
            "label_records": len(self.records.rows("image_labels")),
        }


class FlakyEndpoint:
    """Wraps a pipeline so the first ``failures_per_batch`` uploads of every batch name fail."""

    def __init__(self, pipeline: CloudPipeline, failures_per_batch: int):
        if failures_per_batch < 0:
            raise ValueError("failures_per_batch must be >= 0")
        self.pipeline = pipeline
        self.failures_per_batch = failures_per_batch
        self._seen: dict[str, int] = {}

    def upload(self, name: str, data: bytes, now: int) -> Receipt:
        n = self._seen.get(name, 0)
        self._seen[name] = n + 1
        if n < self.failures_per_batch:
            raise UploadError(f"injected fault {n + 1}/{self.failures_per_batch} for {name}")
        return self.pipeline.upload(name, data, now)


# --------------------------------------------------------------------------
# cost model


USAGE_FIELDS = ("blob_gb_months", "parse_ops", "row_months", "queries", "label_records")


@dataclass(frozen=True)
class RateCard:
    """Unit prices in pence (GBP)."""

    blob_gb_month: Decimal
    parse_op: Decimal
    row_month: Decimal
    query: Decimal
    label_record: Decimal
    currency: str = "GBP"

    def __post_init__(self):
        for f in fields(self)[:5]:
            if getattr(self, f.name) < 0:
                raise ValueError(f"negative price for {f.name}")

    def prices(self) -> tuple[Decimal, ...]:
        return (self.blob_gb_month, self.parse_op, self.row_month, self.query, self.label_record)

    @classmethod
    def from_dict(cls, d: dict) -> RateCard:
        p = d["pence"]
        return cls(*(Decimal(str(p[k])) for k in ("blob_gb_month", "parse_op", "row_month", "query", "label_record")))


@dataclass(frozen=True)
class UsageCounters:
    blob_gb_months: Decimal = Decimal(0)
    parse_ops: Decimal = Decimal(0)
    row_months: Decimal = Decimal(0)
    queries: Decimal = Decimal(0)
    label_records: Decimal = Decimal(0)
    free_tier: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in USAGE_FIELDS:
            if Decimal(getattr(self, name)) < 0:
                raise ValueError(f"negative usage for {name}")

    @classmethod
    def from_dict(cls, d: dict) -> UsageCounters:
        usage = {k: Decimal(str(d["usage"].get(k, 0))) for k in USAGE_FIELDS}
        free = {k: Decimal(str(v)) for k, v in d.get("free_tier", {}).items()}
        return cls(**usage, free_tier=free)


def estimate_cost(usage: UsageCounters, rates: RateCard) -> int:
    """Monthly cost in whole pence: sum of billable usage above free tier times price."""
    total = Decimal(0)
    for name, price in zip(USAGE_FIELDS, rates.prices()):
        billable = Decimal(getattr(usage, name)) - usage.free_tier.get(name, Decimal(0))
        if billable > 0:
            total += billable * price
    return int(total.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def format_gbp(pence: int) -> str:
    return f"£{pence // 100}.{pence % 100:02d}"


def load_cost_fixture(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
