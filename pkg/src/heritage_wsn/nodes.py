"""Simulated sensor nodes driven by a scripted ground-truth environment."""

from __future__ import annotations

import bisect
import csv
import enum
import hashlib
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

from .config import NodeSpec
from .kinds import DEFAULT_ULTRASONIC_CADENCE_S, SensorKind
from .vision import Scheme, behaviour_class, render_synthetic_image

TEMP_RANGE = (-40.0, 80.0)
HUMIDITY_RANGE = (0.0, 100.0)
DISTANCE_RANGE = (2, 400)


class Cause(enum.IntEnum):
    MOTION = 1
    SOUND = 2
    BEAM_INTERRUPTED = 3


CAUSE_FOR_KIND = {
    SensorKind.PIR: Cause.MOTION,
    SensorKind.SOUND: Cause.SOUND,
    SensorKind.PHOTOELECTRIC: Cause.BEAM_INTERRUPTED,
}


class EnvironmentExhausted(ValueError):
    pass


@dataclass(frozen=True)
class SensorReading:
    node_id: int
    timestamp: int
    kind: SensorKind
    value_name: str  # temperature_c | humidity_pct | distance_cm
    value: float

    def __post_init__(self):
        lo, hi = {
            "temperature_c": TEMP_RANGE,
            "humidity_pct": HUMIDITY_RANGE,
            "distance_cm": DISTANCE_RANGE,
        }[self.value_name]
        if not lo <= self.value <= hi:
            raise ValueError(f"{self.value_name}={self.value} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class TriggerEvent:
    node_id: int
    timestamp: int
    kind: SensorKind
    cause: Cause

    def __post_init__(self):
        if CAUSE_FOR_KIND.get(self.kind) is not self.cause:
            raise ValueError(f"cause {self.cause.name} inconsistent with kind {self.kind.value}")


@dataclass(frozen=True)
class ImageCapture:
    node_id: int
    timestamp: int
    payload: bytearray
    checksum: int

    @property
    def image_id(self) -> str:
        return f"img-{self.node_id:04X}-{self.timestamp}"

    def checksum_ok(self) -> bool:
        return len(self.payload) > 0 and zlib.crc32(self.payload) == self.checksum

    def purge(self) -> None:
        """Zero the payload in place, then release it."""
        self.payload[:] = bytes(len(self.payload))
        del self.payload[:]

    @property
    def purged(self) -> bool:
        return len(self.payload) == 0


Event = Union[SensorReading, TriggerEvent, ImageCapture]


@dataclass(frozen=True)
class EnvRecord:
    time: int
    temperature_c: float
    humidity_pct: float
    visitor_present: bool
    sound_level: float
    beam_blocked: bool
    visitor_distance_cm: float


ENV_HEADER = [
    "time_s",
    "temperature_c",
    "humidity_pct",
    "visitor_present",
    "sound_level",
    "beam_blocked",
    "visitor_distance_cm",
]


class EnvironmentScript:
    """Step-function timeline of ground truth, extended by its last entry."""

    def __init__(self, entries: Iterable[EnvRecord]):
        self.entries = tuple(entries)
        if not self.entries:
            raise ValueError("environment script is empty")
        self.times = [e.time for e in self.entries]
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                raise ValueError(f"timeline not strictly increasing at t={b}")
        for e in self.entries:
            if not TEMP_RANGE[0] <= e.temperature_c <= TEMP_RANGE[1]:
                raise ValueError(f"temperature out of range at t={e.time}")
            if not HUMIDITY_RANGE[0] <= e.humidity_pct <= HUMIDITY_RANGE[1]:
                raise ValueError(f"humidity out of range at t={e.time}")
            if not 0.0 <= e.sound_level <= 1.0:
                raise ValueError(f"sound level out of range at t={e.time}")
            if not DISTANCE_RANGE[0] <= e.visitor_distance_cm <= DISTANCE_RANGE[1]:
                raise ValueError(f"visitor distance out of range at t={e.time}")

    def __len__(self) -> int:
        return len(self.entries)

    def index_at(self, t: float) -> int:
        i = bisect.bisect_right(self.times, t) - 1
        if i < 0:
            raise EnvironmentExhausted(f"environment exhausted: t={t} precedes first entry at {self.times[0]}")
        return i

    def entries_between(self, after: float, upto: float, inclusive_start: bool = False) -> tuple[EnvRecord, ...]:
        """Entries with ``after < time <= upto`` (``after <= time`` if inclusive)."""
        lo = bisect.bisect_left(self.times, after) if inclusive_start else bisect.bisect_right(self.times, after)
        hi = bisect.bisect_right(self.times, upto)
        return self.entries[lo:hi]

    @classmethod
    def from_csv(cls, path: str | Path) -> EnvironmentScript:
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.from_rows(csv.DictReader(fh))

    @classmethod
    def from_rows(cls, rows: Iterable[dict]) -> EnvironmentScript:
        entries = []
        for row in rows:
            entries.append(
                EnvRecord(
                    time=int(row["time_s"]),
                    temperature_c=float(row["temperature_c"]),
                    humidity_pct=float(row["humidity_pct"]),
                    visitor_present=row["visitor_present"] == "1",
                    sound_level=float(row["sound_level"]),
                    beam_blocked=row["beam_blocked"] == "1",
                    visitor_distance_cm=float(row["visitor_distance_cm"]),
                )
            )
        return cls(entries)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ENV_HEADER)
            for e in self.entries:
                w.writerow(
                    [
                        e.time,
                        f"{e.temperature_c:.2f}",
                        f"{e.humidity_pct:.2f}",
                        int(e.visitor_present),
                        f"{e.sound_level:.2f}",
                        int(e.beam_blocked),
                        f"{e.visitor_distance_cm:.0f}",
                    ]
                )


def sample_environment(env: EnvironmentScript, t: float) -> EnvRecord:
    return env.entries[env.index_at(t)]


# --------------------------------------------------------------------------
# node stepping


@dataclass(frozen=True)
class NodeState:
    last_step_time: int
    primed: bool = False  # False until the first step has scanned the environment
    prev_predicate: bool = False
    refractory_until: int | None = None


def initial_state(start: int = 0) -> NodeState:
    return NodeState(last_step_time=start)


def effective_cadence(node: NodeSpec) -> int | None:
    if node.cadence_s is not None:
        return node.cadence_s
    if node.kind is SensorKind.ULTRASONIC:
        return DEFAULT_ULTRASONIC_CADENCE_S
    return None


def trigger_predicate(node: NodeSpec, rec: EnvRecord) -> bool:
    if node.kind is SensorKind.PIR:
        return rec.visitor_present
    if node.kind is SensorKind.PHOTOELECTRIC:
        return rec.beam_blocked
    if node.kind is SensorKind.SOUND:
        return rec.sound_level >= node.sound_threshold
    raise ValueError(f"{node.kind.value} is not a trigger node")


def read_sensor(node: NodeSpec, rec: EnvRecord, t: int) -> list[SensorReading]:
    if node.kind is SensorKind.TEMPERATURE_HUMIDITY:
        temp = min(max(round(rec.temperature_c * 10) / 10, TEMP_RANGE[0]), TEMP_RANGE[1])
        hum = min(max(round(rec.humidity_pct * 10) / 10, HUMIDITY_RANGE[0]), HUMIDITY_RANGE[1])
        return [
            SensorReading(node.id, t, node.kind, "temperature_c", temp),
            SensorReading(node.id, t, node.kind, "humidity_pct", hum),
        ]
    if node.kind is SensorKind.ULTRASONIC:
        raw = rec.visitor_distance_cm if rec.visitor_present else DISTANCE_RANGE[1]
        dist = min(max(int(round(raw)), DISTANCE_RANGE[0]), DISTANCE_RANGE[1])
        return [SensorReading(node.id, t, node.kind, "distance_cm", float(dist))]
    raise ValueError(f"{node.kind.value} is not a periodic node")


def step_node(node: NodeSpec, state: NodeState, now: int, env: EnvironmentScript) -> tuple[list[Event], NodeState]:
    """Advance one node to ``now`` and return what it emitted on the way.

    Periodic nodes emit at each cadence boundary ``k * cadence`` in
    ``(last_step_time, now]``. Trigger nodes fire on false-to-true edges of
    their predicate, honouring the refractory period; emissions carry the
    edge's own timestamp. Cameras never self-emit.
    """
    if now < state.last_step_time:
        raise ValueError(f"cannot step backwards from {state.last_step_time} to {now}")
    env.index_at(now)  # raises EnvironmentExhausted before the first entry
    events: list[Event] = []
    cadence = effective_cadence(node)
    if node.kind.is_periodic and cadence is not None:
        k = state.last_step_time // cadence + 1
        while k * cadence <= now:
            t = k * cadence
            events.extend(read_sensor(node, sample_environment(env, t), t))
            k += 1
        return events, NodeState(now, True)
    if node.kind.is_trigger:
        prev = state.prev_predicate
        if not state.primed:
            before = bisect.bisect_left(env.times, state.last_step_time) - 1
            prev = before >= 0 and trigger_predicate(node, env.entries[before])
        refractory_until = state.refractory_until
        for rec in env.entries_between(state.last_step_time, now, inclusive_start=not state.primed):
            cur = trigger_predicate(node, rec)
            if cur and not prev and (refractory_until is None or rec.time >= refractory_until):
                events.append(TriggerEvent(node.id, rec.time, node.kind, CAUSE_FOR_KIND[node.kind]))
                refractory_until = rec.time + node.refractory_s
            prev = cur
        return events, NodeState(now, True, prev, refractory_until)
    return events, NodeState(now, True, state.prev_predicate, state.refractory_until)


# --------------------------------------------------------------------------
# power


@dataclass(frozen=True)
class ActivityLog:
    """Half-open active intervals ``[start, end)`` in simulated seconds."""

    intervals: tuple[tuple[float, float], ...] = ()

    def active_seconds(self, start: float, end: float) -> float:
        total = 0.0
        for a, b in self.intervals:
            lo, hi = max(a, start), min(b, end)
            if hi > lo:
                total += hi - lo
        return total


def power_consumed(node: NodeSpec, window: tuple[float, float], activity: ActivityLog = ActivityLog()) -> float:
    """mAh drawn by ``node`` over ``window = (start, end)``."""
    start, end = window
    if end < start:
        raise ValueError("window end precedes start")
    hours = (end - start) / 3600.0
    if node.kind is not SensorKind.CAMERA:
        return node.power.active_mah_per_h * hours
    active_h = activity.active_seconds(start, end) / 3600.0
    return node.power.idle_mah_per_h * (hours - active_h) + node.power.active_mah_per_h * active_h


# --------------------------------------------------------------------------
# camera


def _frame_seed(node_id: int, now: int, rec: EnvRecord) -> int:
    material = f"{node_id}|{now}|{rec.time}|{int(rec.visitor_present)}|{rec.visitor_distance_cm}".encode()
    return int.from_bytes(hashlib.blake2b(material, digest_size=8).digest(), "big")


def capture_image(node: NodeSpec, env: EnvironmentScript, now: int, scheme: Scheme = Scheme.BINARY) -> ImageCapture:
    if node.kind is not SensorKind.CAMERA:
        raise ValueError(f"node 0x{node.id:04X} is {node.kind.value}, not a camera")
    rec = sample_environment(env, now)
    cls = behaviour_class(rec.visitor_present, rec.visitor_distance_cm, scheme)
    payload = render_synthetic_image(scheme, cls, _frame_seed(node.id, now, rec))
    return ImageCapture(node.id, now, payload, zlib.crc32(payload))
