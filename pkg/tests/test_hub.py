from __future__ import annotations

import csv
import io
import threading

import pytest

from conftest import config_of, env_from, node
from heritage_wsn.cloud import BATCH_HEADER, CloudPipeline
from heritage_wsn.config import ChangeSet
from heritage_wsn.hub import Category, EventLedger, Hub, LedgerEntry
from heritage_wsn.kinds import SensorKind
from heritage_wsn.nodes import Cause, SensorReading, TriggerEvent, capture_image
from heritage_wsn.vision import Classifier

PIR, CAM, DHT = node(2, SensorKind.PIR), node(6, SensorKind.CAMERA), node(1, SensorKind.TEMPERATURE_HUMIDITY)


def _hub(*nodes, cloud=None, store=None, **hub_kw):
    return Hub(config_of(*(nodes or (DHT, PIR, CAM)), **hub_kw), cloud=cloud, store_dir=store)


def _reading(t, value=20.5, name="temperature_c"):
    return SensorReading(1, t, SensorKind.TEMPERATURE_HUMIDITY, name, value)


def _trigger(t, node_id=2):
    return TriggerEvent(node_id, t, SensorKind.PIR, Cause.MOTION)


# --------------------------------------------------------------------------
# ledger


def test_ledger_is_gap_free_and_non_decreasing():
    led = EventLedger()
    for t in (0, 5, 5, 9):
        led.append(t, Category.SYSTEM, None)
    assert [e.seq for e in led.entries()] == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        led.append(3, Category.SYSTEM, None)
    assert [e.seq for e in led.window(0, 5)] == [1, 2]
    assert led.counts() == led.scan_counts()


def test_ledger_persists_json_lines(tmp_path):
    led = EventLedger(tmp_path / "ledger.jsonl")
    e = led.append(7, Category.TRIGGER, 2, {"value": "MOTION"})
    led.close()
    (line,) = (tmp_path / "ledger.jsonl").read_text().splitlines()
    assert LedgerEntry.from_json(line) == e


# --------------------------------------------------------------------------
# ingestion


def test_reading_becomes_sensor_reading_entry():
    hub = _hub()
    e = hub.ingest(_reading(300), now=323)
    assert e.category is Category.SENSOR_READING and e.node_id == 1 and e.timestamp == 323
    assert e.detail["event_time"] == 300 and e.detail["value"] == 20.5
    assert hub.last_reading[1]["value"] == 20.5


def test_trigger_queues_capture_for_nearest_camera():
    far_cam = node(7, SensorKind.CAMERA, distance_m=9.0)
    hub = _hub(PIR, CAM, far_cam)
    e = hub.ingest(_trigger(100), now=112)
    assert e.category is Category.TRIGGER and e.detail["value"] == "MOTION"
    assert [(c.camera_id, c.trigger_node, c.issued_at) for c in hub.pending_captures] == [(6, 2, 112)]


def test_capture_policy_all_commands_every_camera():
    hub = _hub(PIR, CAM, node(7, SensorKind.CAMERA, distance_m=9.0), capture_policy="all")
    hub.ingest(_trigger(100), now=112)
    assert [c.camera_id for c in hub.pending_captures] == [6, 7]


def test_trigger_without_camera_logs_failure():
    hub = _hub(DHT, PIR)
    hub.ingest(_trigger(50), now=62)
    assert [e.category for e in hub.ledger.entries()] == [Category.TRIGGER, Category.SYSTEM]
    assert hub.ledger[1].detail["reason"] == "no camera registered"
    assert not hub.pending_captures


def test_image_is_labelled_and_purged():
    hub = _hub()
    img = capture_image(CAM, env_from({0: {"visitor_present": True, "visitor_distance_cm": 40}}), 10)
    image_id = img.image_id
    e = hub.ingest(img, now=14)
    assert img.purged and len(img.payload) == 0
    assert e.category is Category.IMAGE_CAPTURE
    assert e.detail["value"] == image_id and e.detail["label"] == "risky" and e.detail["confidence"] == 1.0


class _Exploding(Classifier):
    name = "exploding"

    def predict(self, image):
        raise RuntimeError("model file missing")


def test_classifier_failure_degrades_to_unknown_and_still_purges():
    hub = _hub()
    img = capture_image(CAM, env_from({}), 10)
    label, confidence = hub.classify_and_purge(img, _Exploding())
    assert label.name == "UNKNOWN" and confidence == 0.0
    assert img.purged


def test_routine_check_requires_registered_node():
    hub = _hub()
    assert hub.routine_check(PIR, 66).category is Category.ROUTINE_CHECK
    with pytest.raises(KeyError):
        hub.routine_check(node(99, SensorKind.PIR), 66)


def test_ingest_rejects_unknown_type():
    with pytest.raises(TypeError):
        _hub().ingest("hello", 0)


# --------------------------------------------------------------------------
# batches


def test_compile_batch_keeps_batched_categories_in_window():
    hub = _hub()
    hub.ingest(_reading(0), now=5)
    hub.routine_check(PIR, 10)
    hub.ingest(_reading(10, 55.0, "humidity_pct"), now=20)
    hub.ingest(_trigger(100), now=112)
    hub.ingest(capture_image(CAM, env_from({}), 112), now=116)
    hub.ingest(_reading(400), now=400)
    hub.advance(300)
    batch = hub.compile_batch((0, 300))
    rows = list(csv.reader(io.StringIO(batch.records_csv.decode())))
    assert rows[0] == BATCH_HEADER
    assert [r[2] for r in rows[1:]] == ["SENSOR_READING", "SENSOR_READING", "TRIGGER", "IMAGE_CAPTURE"]
    assert batch.row_count == 4 and len(batch.image_labels) == 1
    assert batch.records_csv.endswith(b"\r\n")


def test_empty_window_gives_header_only_batch():
    hub = _hub()
    hub.advance(300)
    batch = hub.compile_batch((0, 300))
    assert batch.records_csv == (",".join(BATCH_HEADER) + "\r\n").encode()
    assert batch.row_count == 0


def test_window_in_the_future_rejected():
    hub = _hub()
    with pytest.raises(ValueError):
        hub.compile_batch((0, 10))


def test_retry_succeeds_on_third_attempt(tmp_path):
    cloud = CloudPipeline(tmp_path / "cloud")
    hub = _hub(cloud=cloud, upload_retry_limit=3)
    hub.ingest(_reading(0), now=5)
    hub.advance(300)
    hub.compile_batch((0, 300))
    cloud.blobs.inject_failures(2)
    (res,) = hub.flush_uploads(300)
    assert res.success and res.attempts == 3
    net = [e for e in hub.ledger.entries() if e.category is Category.NETWORK_REQUEST]
    assert [(e.detail["attempt"], e.detail["outcome"]) for e in net] == [(1, "failed"), (2, "failed"), (3, "ok")]
    assert len(cloud.records.rows("readings")) == 1
    assert not hub.dead_letters


def test_retry_limit_zero_dead_letters_after_one_failure(tmp_path):
    cloud = CloudPipeline(tmp_path / "cloud")
    hub = _hub(cloud=cloud, store=tmp_path / "hub", upload_retry_limit=0)
    hub.ingest(_reading(0), now=5)
    hub.advance(300)
    batch = hub.compile_batch((0, 300))
    cloud.blobs.inject_failures(1)
    (res,) = hub.flush_uploads(300)
    assert not res.success and res.attempts == 1
    assert hub.dead_letters == [batch]
    assert (tmp_path / "hub" / "dead_letter" / f"dead_{batch.batch_id}.csv").read_bytes() == batch.records_csv


def test_no_cloud_is_a_failed_upload():
    hub = _hub(upload_retry_limit=1)
    hub.advance(300)
    hub.compile_batch((0, 300))
    (res,) = hub.flush_uploads(300)
    assert not res.success and res.attempts == 2 and "no cloud" in res.error


# --------------------------------------------------------------------------
# status and reconfiguration


def test_status_snapshot_matches_ledger():
    hub = _hub()
    hub.ingest(_reading(0), now=5)
    hub.ingest(_trigger(10), now=22)
    snap = hub.status_snapshot(now=100)
    assert snap.uptime_s == 100
    assert snap.total_entries == sum(snap.counts.values()) == 2
    assert snap.last_reading["0x0001"]["value"] == 20.5
    assert snap.to_dict()["classifier"] == hub.classifier.name


def test_snapshots_consistent_under_concurrent_ingest():
    hub = _hub()
    stop = threading.Event()
    bad = []

    def reader():
        while not stop.is_set():
            s = hub.status_snapshot()
            if sum(s.counts.values()) != s.total_entries:
                bad.append(s)

    th = threading.Thread(target=reader)
    th.start()
    for t in range(3000):
        hub.ingest(_reading(t), now=t)
    stop.set()
    th.join()
    assert not bad


def test_removing_camera_stops_captures():
    hub = _hub()
    hub.apply_config_change(ChangeSet(removed=(6,)))
    hub.ingest(_trigger(10), now=22)
    assert hub.ledger[-1].detail["event"] == "capture_command_failed"


def test_config_change_with_unknown_id_leaves_registry():
    hub = _hub()
    before = dict(hub.registry)
    with pytest.raises(KeyError):
        hub.apply_config_change(ChangeSet(removed=(42,)))
    assert hub.registry == before
