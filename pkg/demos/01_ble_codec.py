"""Encode a few node events as BLE advertisements, decode them back, and see
how signal strength falls off with distance."""

from heritage_wsn.kinds import TABLE_RSSI_1M, SensorKind
from heritage_wsn.nodes import Cause, SensorReading, TriggerEvent
from heritage_wsn.transport import decode_reading, encode_reading, rssi_at, rssi_dbm

events = [
    SensorReading(0x0001, 300, SensorKind.TEMPERATURE_HUMIDITY, "temperature_c", 21.57),
    SensorReading(0x0001, 300, SensorKind.TEMPERATURE_HUMIDITY, "humidity_pct", 48.3),
    SensorReading(0x0005, 447, SensorKind.ULTRASONIC, "distance_cm", 87.0),
    TriggerEvent(0x0002, 32712, SensorKind.PIR, Cause.MOTION),
]

print("event -> advertisement bytes")
for seq, ev in enumerate(events):
    raw = encode_reading(ev, seq).to_bytes()
    assert decode_reading(raw) == ev
    print(f"  {ev.kind.value:<11} {len(raw):>2} bytes  {raw.hex(' ')}")

print("\nRSSI by distance (model dBm / stamped whole dBm)")
print("  " + "".join(f"{d:>14} m" for d in (1, 2, 5, 10)))
for kind, anchor in TABLE_RSSI_1M.items():
    cells = "".join(f"{rssi_at(anchor, d):>9.2f} / {rssi_dbm(anchor, d):>4}" for d in (1, 2, 5, 10))
    print(f"  {kind.value:<13}{cells}")
