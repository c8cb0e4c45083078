"""Sensor kinds and their measured characteristics.

The per-kind constants below are the bench figures for the six node types:
hourly power draw, end-to-end communication latency and RSSI at 1 m.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class SensorKind(str, enum.Enum):
    TEMPERATURE_HUMIDITY = "dht22"
    PIR = "pir"
    PHOTOELECTRIC = "photoelectric"
    ULTRASONIC = "ultrasonic"
    SOUND = "sound"
    CAMERA = "camera"

    @property
    def is_trigger(self) -> bool:
        return self in TRIGGER_KINDS

    @property
    def is_periodic(self) -> bool:
        return self in (SensorKind.TEMPERATURE_HUMIDITY, SensorKind.ULTRASONIC)


TRIGGER_KINDS = frozenset({SensorKind.PIR, SensorKind.PHOTOELECTRIC, SensorKind.SOUND})


class Transport(str, enum.Enum):
    BLE = "ble"
    WIFI = "wifi"


@dataclass(frozen=True)
class PowerProfile:
    idle_mah_per_h: float
    active_mah_per_h: float

    def to_dict(self) -> dict:
        return {"idle_mah_per_h": self.idle_mah_per_h, "active_mah_per_h": self.active_mah_per_h}


MODULE_NAMES = {
    SensorKind.TEMPERATURE_HUMIDITY: "DHT22",
    SensorKind.PIR: "HW-416-B",
    SensorKind.PHOTOELECTRIC: "E3F-R2N1",
    SensorKind.ULTRASONIC: "HC-SR04",
    SensorKind.SOUND: "KY-038",
    SensorKind.CAMERA: "OV2640",
}

# mAh drawn over one hour. Single-figure kinds use idle == active.
TABLE_POWER = {
    SensorKind.TEMPERATURE_HUMIDITY: PowerProfile(84.0, 84.0),
    SensorKind.PIR: PowerProfile(114.0, 114.0),
    SensorKind.PHOTOELECTRIC: PowerProfile(54.0, 54.0),
    SensorKind.SOUND: PowerProfile(60.0, 60.0),
    SensorKind.ULTRASONIC: PowerProfile(54.0, 54.0),
    SensorKind.CAMERA: PowerProfile(120.0, 126.0),
}

# Seconds from emission to hub delivery, per advertised value.
# DHT22 sends temperature and humidity back to back: 23 s each, 46 s per pair.
TABLE_LATENCY_S = {
    SensorKind.TEMPERATURE_HUMIDITY: 23,
    SensorKind.PIR: 12,
    SensorKind.PHOTOELECTRIC: 13,
    SensorKind.SOUND: 11,
    SensorKind.ULTRASONIC: 6,
    SensorKind.CAMERA: 4,
}

# dBm at 1 m. The camera talks Wi-Fi and has no BLE anchor.
TABLE_RSSI_1M = {
    SensorKind.TEMPERATURE_HUMIDITY: -90,
    SensorKind.PIR: -101,
    SensorKind.PHOTOELECTRIC: -86,
    SensorKind.SOUND: -89,
    SensorKind.ULTRASONIC: -80,
}

DEFAULT_ULTRASONIC_CADENCE_S = 6
DEFAULT_REFRACTORY_S = 5
DEFAULT_SOUND_THRESHOLD = 0.5
