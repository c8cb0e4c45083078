"""Byte-level privacy audit of a run directory.

Frame payloads are purged at the hub, so the audit cannot read them back.
It regenerates each captured frame from the ledger entry (camera, capture
time) plus the persisted environment script, which is exactly how the camera
synthesised it, and then searches every persisted byte for each frame's
16-byte content fingerprint and for the synthetic-frame magic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .config import load_config
from .hub import Category
from .nodes import EnvironmentScript, capture_image
from .report import read_ledger
from .vision import HEADER_LEN, MAGIC, Scheme

FINGERPRINT_LEN = 16


def fingerprint(payload: bytes | bytearray) -> bytes:
    """The first 16 pixel bytes; the header is shared by every frame of a class."""
    return bytes(payload[HEADER_LEN : HEADER_LEN + FINGERPRINT_LEN])


@dataclass
class AuditResult:
    images: int = 0
    files_scanned: int = 0
    bytes_scanned: int = 0
    hits: list[tuple[str, str]] = field(default_factory=list)  # (where, image_id)
    magic_hits: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.hits and not self.magic_hits


def regenerate_fingerprints(run_dir: str | Path) -> dict[str, bytes]:
    """image_id -> fingerprint for every frame a camera produced during the run."""
    run_dir = Path(run_dir)
    config = load_config(run_dir / "config.json")
    env = EnvironmentScript.from_csv(run_dir / "env.csv")
    scheme = Scheme[json.loads((run_dir / "scenario.json").read_text())["scheme"]]
    cameras = {n.id: n for n in config.nodes}
    out = {}
    for e in read_ledger(run_dir):
        d = e["detail"]
        if e["category"] == Category.IMAGE_CAPTURE.value:
            t = d["event_time"]
        elif e["category"] == Category.SYSTEM.value and d.get("event") == "image_transfer_failed":
            t = e["timestamp"]
        else:
            continue
        img = capture_image(cameras[e["node_id"]], env, t, scheme)
        out[img.image_id] = fingerprint(img.payload)
        img.purge()
    return out


def _scan(where: str, data: bytes, prints: dict[str, bytes], result: AuditResult) -> None:
    result.bytes_scanned += len(data)
    for image_id, fp in prints.items():
        if fp in data:
            result.hits.append((where, image_id))
    if MAGIC in data:
        result.magic_hits.append(where)


def audit_run(run_dir: str | Path, extra: Iterable[tuple[str, bytes]] = ()) -> AuditResult:
    """Scan every file under ``run_dir`` plus any in-memory ``(label, bytes)`` pairs.

    ``extra`` is how callers holding live UploadBatches include them.
    """
    run_dir = Path(run_dir)
    prints = regenerate_fingerprints(run_dir)
    result = AuditResult(images=len(prints))
    for path in sorted(p for p in run_dir.rglob("*") if p.is_file()):
        result.files_scanned += 1
        _scan(str(path.relative_to(run_dir)), path.read_bytes(), prints, result)
    for label, data in extra:
        _scan(label, bytes(data), prints, result)
    return result
