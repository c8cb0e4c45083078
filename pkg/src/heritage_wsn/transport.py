"""Node-to-hub channels: BLE advertisements and acknowledged Wi-Fi transfer.

BLE advertisement layout (big-endian)::

    0-1  node_id   u16
    2    kind_tag  u8
    3    sequence  u8 (wraps)
    4-7  timestamp u32 seconds
    8-   value     i16 x100 (temperature, humidity) | u16 cm (distance)
                   | u8 cause code (triggers)
"""

from __future__ import annotations

import enum
import math
import random
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable

from .kinds import TABLE_LATENCY_S, TABLE_RSSI_1M, SensorKind
from .nodes import CAUSE_FOR_KIND, Cause, ImageCapture, SensorReading, TriggerEvent

MAX_ADV_BYTES = 31
MAX_PAYLOAD_BYTES = 24
HEADER = struct.Struct(">HBB")
TIMESTAMP = struct.Struct(">I")


class KindTag(enum.IntEnum):
    TEMPERATURE = 0x01
    HUMIDITY = 0x02
    DISTANCE = 0x03
    PIR = 0x10
    PHOTOELECTRIC = 0x11
    SOUND = 0x12


_READING_TAGS = {
    "temperature_c": KindTag.TEMPERATURE,
    "humidity_pct": KindTag.HUMIDITY,
    "distance_cm": KindTag.DISTANCE,
}
_TRIGGER_TAGS = {
    SensorKind.PIR: KindTag.PIR,
    SensorKind.PHOTOELECTRIC: KindTag.PHOTOELECTRIC,
    SensorKind.SOUND: KindTag.SOUND,
}
TAG_KIND = {
    KindTag.TEMPERATURE: SensorKind.TEMPERATURE_HUMIDITY,
    KindTag.HUMIDITY: SensorKind.TEMPERATURE_HUMIDITY,
    KindTag.DISTANCE: SensorKind.ULTRASONIC,
    KindTag.PIR: SensorKind.PIR,
    KindTag.PHOTOELECTRIC: SensorKind.PHOTOELECTRIC,
    KindTag.SOUND: SensorKind.SOUND,
}
# bytes after the 4-byte timestamp
VALUE_LEN = {
    KindTag.TEMPERATURE: 2,
    KindTag.HUMIDITY: 2,
    KindTag.DISTANCE: 2,
    KindTag.PIR: 1,
    KindTag.PHOTOELECTRIC: 1,
    KindTag.SOUND: 1,
}


class ContractViolation(ValueError):
    pass


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class BleAdvertisement:
    node_id: int
    kind_tag: int
    sequence: int
    payload: bytes
    rssi_dbm: int | None = None  # stamped at delivery, not part of the air bytes

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD_BYTES:
            raise ContractViolation(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD_BYTES}")

    def to_bytes(self) -> bytes:
        return HEADER.pack(self.node_id, self.kind_tag, self.sequence) + self.payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> BleAdvertisement:
        if len(raw) < HEADER.size:
            raise DecodeError(f"truncated advertisement: {len(raw)} bytes")
        if len(raw) > MAX_ADV_BYTES:
            raise DecodeError(f"advertisement of {len(raw)} bytes exceeds {MAX_ADV_BYTES}")
        node_id, tag, seq = HEADER.unpack_from(raw)
        return cls(node_id, tag, seq, bytes(raw[HEADER.size:]))

    def __len__(self) -> int:
        return HEADER.size + len(self.payload)


def _fixed100(value: float) -> int:
    return math.floor(value * 100 + 0.5)


def encode_reading(event: SensorReading | TriggerEvent, sequence: int = 0) -> BleAdvertisement:
    if isinstance(event, ImageCapture):
        raise ContractViolation("images travel over Wi-Fi, not BLE")
    ts = TIMESTAMP.pack(event.timestamp)
    if isinstance(event, SensorReading):
        tag = _READING_TAGS[event.value_name]
        if tag is KindTag.DISTANCE:
            value = struct.pack(">H", int(event.value))
        else:
            value = struct.pack(">h", _fixed100(event.value))
    elif isinstance(event, TriggerEvent):
        tag = _TRIGGER_TAGS[event.kind]
        value = bytes([int(event.cause)])
    else:
        raise ContractViolation(f"cannot encode {type(event).__name__}")
    return BleAdvertisement(event.node_id, int(tag), sequence & 0xFF, ts + value)


def decode_reading(adv: BleAdvertisement | bytes) -> SensorReading | TriggerEvent:
    if not isinstance(adv, BleAdvertisement):
        adv = BleAdvertisement.from_bytes(adv)
    try:
        tag = KindTag(adv.kind_tag)
    except ValueError:
        raise DecodeError(f"unknown kind tag 0x{adv.kind_tag:02X}") from None
    want = TIMESTAMP.size + VALUE_LEN[tag]
    if len(adv.payload) < want:
        raise DecodeError(f"truncated payload for {tag.name}: {len(adv.payload)} < {want} bytes")
    if len(adv.payload) > want:
        raise DecodeError(f"oversized payload for {tag.name}: {len(adv.payload)} > {want} bytes")
    (ts,) = TIMESTAMP.unpack_from(adv.payload)
    body = adv.payload[TIMESTAMP.size:]
    kind = TAG_KIND[tag]
    if tag is KindTag.DISTANCE:
        (cm,) = struct.unpack(">H", body)
        return SensorReading(adv.node_id, ts, kind, "distance_cm", float(cm))
    if tag in (KindTag.TEMPERATURE, KindTag.HUMIDITY):
        (raw,) = struct.unpack(">h", body)
        name = "temperature_c" if tag is KindTag.TEMPERATURE else "humidity_pct"
        return SensorReading(adv.node_id, ts, kind, name, raw / 100)
    try:
        cause = Cause(body[0])
    except ValueError:
        raise DecodeError(f"unknown cause code {body[0]}") from None
    if CAUSE_FOR_KIND[kind] is not cause:
        raise DecodeError(f"cause {cause.name} does not match tag {tag.name}")
    return TriggerEvent(adv.node_id, ts, kind, cause)


class SequenceCounter:
    """Per-node wrapping 8-bit advertisement counters."""

    def __init__(self):
        self._next: dict[int, int] = {}

    def next(self, node_id: int) -> int:
        seq = self._next.get(node_id, 0)
        self._next[node_id] = (seq + 1) & 0xFF
        return seq


# --------------------------------------------------------------------------
# propagation


def rssi_at(rssi_1m: float, distance_m: float, n: float = 2.0) -> float:
    """Log-distance RSSI in dBm at ``distance_m`` metres.

    Kept unquantised so it is strictly decreasing in distance; radios report
    whole dBm, see :func:`rssi_dbm`.
    """
    if not distance_m > 0:
        raise ContractViolation("distance must be positive")
    if not n > 0:
        raise ContractViolation("path-loss exponent must be positive")
    return rssi_1m - 10.0 * n * math.log10(distance_m)


def quantize_dbm(rssi: float) -> int:
    """Whole dBm, halves rounded up (towards the stronger signal)."""
    return math.floor(rssi + 0.5)


def rssi_dbm(rssi_1m: float, distance_m: float, n: float = 2.0) -> int:
    """The RSSI a receiver stamps on a packet: :func:`rssi_at` in whole dBm."""
    return quantize_dbm(rssi_at(rssi_1m, distance_m, n))


@dataclass(frozen=True)
class ChannelModel:
    rssi_1m_dbm: dict = field(default_factory=lambda: dict(TABLE_RSSI_1M))
    path_loss_exponent: float = 2.0
    loss_probability: float = 0.0
    latency_s: dict = field(default_factory=lambda: dict(TABLE_LATENCY_S))
    wifi_duration_s: int = 4

    def __post_init__(self):
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ContractViolation("loss_probability outside [0, 1]")
        if not self.path_loss_exponent > 0:
            raise ContractViolation("path-loss exponent must be positive")


@dataclass(frozen=True)
class Delivery:
    delivered: bool
    latency_s: int
    rssi_dbm: int
    advertisement: BleAdvertisement


def transmit_ble(
    adv: BleAdvertisement,
    channel: ChannelModel,
    distance_m: float,
    rng: random.Random | int,
) -> Delivery:
    """Fire-and-forget broadcast. Loss is drawn from ``rng``; nothing is retried."""
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    try:
        kind = TAG_KIND[KindTag(adv.kind_tag)]
    except ValueError:
        raise ContractViolation(f"channel has no model for kind tag 0x{adv.kind_tag:02X}") from None
    if kind not in channel.latency_s or kind not in channel.rssi_1m_dbm:
        raise ContractViolation(f"channel not configured for {kind.value}")
    delivered = rng.random() >= channel.loss_probability
    rssi = rssi_dbm(channel.rssi_1m_dbm[kind], distance_m, channel.path_loss_exponent)
    return Delivery(delivered, channel.latency_s[kind], rssi, replace(adv, rssi_dbm=rssi))


class Outcome(str, enum.Enum):
    DELIVERED = "DELIVERED"
    FAILED = "FAILED"


@dataclass(frozen=True)
class WifiTransfer:
    node_id: int
    byte_count: int
    duration_s: float
    outcome: Outcome
    diagnostic: str = ""
    received: ImageCapture | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.outcome is Outcome.DELIVERED and not self.duration_s > 0:
            raise ContractViolation("delivered transfer needs positive duration")


Fault = Callable[[bytearray], None]


def corrupt_last_byte(buf: bytearray) -> None:
    """Fault injector: corrupt one byte in flight."""
    buf[-1] ^= 0xFF


def transmit_wifi(img: ImageCapture, channel: ChannelModel = ChannelModel(), fault: Fault | None = None) -> WifiTransfer:
    """Acknowledged transfer; the receiver verifies the CRC-32 before accepting."""
    if not img.payload:
        raise ContractViolation("image payload is empty")
    wire = bytearray(img.payload)
    if fault is not None:
        fault(wire)
    if zlib.crc32(wire) != img.checksum:
        wire[:] = bytes(len(wire))
        return WifiTransfer(
            img.node_id,
            len(img.payload),
            channel.wifi_duration_s,
            Outcome.FAILED,
            f"checksum mismatch for {img.image_id}",
        )
    received = ImageCapture(img.node_id, img.timestamp, wire, img.checksum)
    return WifiTransfer(img.node_id, len(wire), channel.wifi_duration_s, Outcome.DELIVERED, received=received)

