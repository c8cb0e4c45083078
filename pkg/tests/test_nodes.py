from __future__ import annotations

import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import env_from, node
from heritage_wsn.kinds import SensorKind
from heritage_wsn.nodes import (
    ActivityLog,
    Cause,
    EnvironmentExhausted,
    EnvironmentScript,
    EnvRecord,
    ImageCapture,
    SensorReading,
    TriggerEvent,
    capture_image,
    initial_state,
    power_consumed,
    sample_environment,
    step_node,
)
from heritage_wsn.vision import Scheme, oracle_classify


def _run(n, env, times, start=0):
    """Step ``n`` at each of ``times`` and collect everything it emitted."""
    state = initial_state(start)
    out = []
    for t in times:
        events, state = step_node(n, state, t, env)
        out.extend(events)
    return out


# --------------------------------------------------------------------------
# environment


def test_sample_environment_step_semantics():
    env = env_from({0: {"temperature_c": 18.0}, 100: {"temperature_c": 19.0}, 200: {"temperature_c": 21.0}})
    assert sample_environment(env, 100).temperature_c == 19.0
    assert sample_environment(env, 150).temperature_c == 19.0
    assert sample_environment(env, 10_000).temperature_c == 21.0


def test_sample_before_first_entry_is_exhausted():
    env = env_from({}, start=50)
    with pytest.raises(EnvironmentExhausted, match="environment exhausted"):
        sample_environment(env, 49)


def test_script_rejects_bad_timelines():
    rec = env_from({}).entries[0]
    with pytest.raises(ValueError, match="strictly increasing"):
        EnvironmentScript([rec, rec])
    with pytest.raises(ValueError, match="humidity"):
        EnvironmentScript([EnvRecord(0, 20.0, 101.0, False, 0.1, False, 400)])
    with pytest.raises(ValueError, match="empty"):
        EnvironmentScript([])


def test_csv_round_trip(tmp_path):
    env = env_from({0: {}, 30: {"visitor_present": True, "visitor_distance_cm": 80}, 45: {"beam_blocked": True}})
    env.to_csv(tmp_path / "e.csv")
    assert EnvironmentScript.from_csv(tmp_path / "e.csv").entries == env.entries


# --------------------------------------------------------------------------
# periodic nodes


def test_dht22_one_hour_gives_twelve_pairs():
    env = env_from({})
    events = _run(node(1, SensorKind.TEMPERATURE_HUMIDITY, cadence_s=300), env, [3600])
    assert len(events) == 24
    assert sorted({e.timestamp for e in events}) == list(range(300, 3601, 300))
    assert {e.value_name for e in events} == {"temperature_c", "humidity_pct"}


def test_periodic_emission_independent_of_step_granularity():
    env = env_from({})
    n = node(1, SensorKind.ULTRASONIC, cadence_s=7)
    coarse = _run(n, env, [1000])
    fine = _run(n, env, range(1, 1001))
    assert coarse == fine


def test_ultrasonic_defaults_to_six_seconds_and_reports_visitor():
    env = env_from({10: {"visitor_present": True, "visitor_distance_cm": 55.4}, 20: {"visitor_present": False}})
    events = _run(node(5, SensorKind.ULTRASONIC), env, [24])
    assert [(e.timestamp, e.value) for e in events] == [(6, 400.0), (12, 55.0), (18, 55.0), (24, 400.0)]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5000), st.integers(0, 200_000))
def test_periodic_count_is_floor_of_window_over_cadence(cadence, window):
    env = env_from({})
    events = _run(node(5, SensorKind.ULTRASONIC, cadence_s=cadence), env, [window])
    assert len(events) == window // cadence


def test_readings_stay_in_physical_range():
    env = env_from({0: {"temperature_c": 79.99, "humidity_pct": 99.99}})
    (t, h) = _run(node(1, SensorKind.TEMPERATURE_HUMIDITY, cadence_s=60), env, [60])
    assert t.value == 80.0 and h.value == 100.0


def test_reading_range_checks():
    with pytest.raises(ValueError):
        SensorReading(1, 0, SensorKind.ULTRASONIC, "distance_cm", 1.0)
    with pytest.raises(ValueError):
        SensorReading(1, 0, SensorKind.TEMPERATURE_HUMIDITY, "temperature_c", -41.0)


# --------------------------------------------------------------------------
# trigger nodes


def test_pir_constant_absence_never_fires():
    env = env_from({i * 10: {"temperature_c": 20 + i * 0.1} for i in range(50)})
    assert _run(node(2, SensorKind.PIR), env, [500]) == []


def test_pir_fires_on_each_rising_edge():
    env = env_from({100: {"visitor_present": True}, 200: {"visitor_present": False}, 300: {"visitor_present": True}, 350: {}})
    events = _run(node(2, SensorKind.PIR), env, [1000])
    assert [e.timestamp for e in events] == [100, 300]
    assert all(e.cause is Cause.MOTION for e in events)


def test_held_level_fires_once():
    # before the script starts the predicate counts as false
    env = env_from({0: {"beam_blocked": True}, 50: {"temperature_c": 21.0}, 90: {"temperature_c": 22.0}})
    events = _run(node(3, SensorKind.PHOTOELECTRIC), env, [10, 60, 100])
    assert [e.timestamp for e in events] == [0]


def test_refractory_suppresses_quick_retrigger():
    env = env_from({10: {"sound_level": 0.9}, 11: {"sound_level": 0.1}, 13: {"sound_level": 0.9}, 14: {"sound_level": 0.1},
                    20: {"sound_level": 0.9}})
    events = _run(node(4, SensorKind.SOUND), env, [30])
    assert [e.timestamp for e in events] == [10, 20]


def test_sound_threshold_is_configurable():
    env = env_from({10: {"sound_level": 0.6}})
    assert len(_run(node(4, SensorKind.SOUND), env, [20])) == 1
    assert _run(node(4, SensorKind.SOUND, sound_threshold=0.7), env, [20]) == []


def test_node_started_mid_episode_does_not_fire():
    env = env_from({100: {"visitor_present": True}, 300: {"visitor_present": False}})
    assert _run(node(2, SensorKind.PIR), env, [400], start=150) == []


def test_camera_never_self_emits():
    env = env_from({10: {"visitor_present": True}})
    assert _run(node(6, SensorKind.CAMERA), env, [100]) == []


def test_cannot_step_backwards():
    env = env_from({})
    _, state = step_node(node(2, SensorKind.PIR), initial_state(), 10, env)
    with pytest.raises(ValueError):
        step_node(node(2, SensorKind.PIR), state, 5, env)


def test_trigger_cause_must_match_kind():
    with pytest.raises(ValueError):
        TriggerEvent(1, 0, SensorKind.PIR, Cause.SOUND)


def _brute_force_edges(env, predicate, refractory):
    fired, prev, until = [], False, None
    for rec in env.entries:
        cur = predicate(rec)
        if cur and not prev and (until is None or rec.time >= until):
            fired.append(rec.time)
            until = rec.time + refractory
        prev = cur
    return fired


@st.composite
def scripts(draw):
    gaps = draw(st.lists(st.integers(1, 40), min_size=1, max_size=60))
    t, entries = 0, []
    for gap in gaps:
        entries.append(
            EnvRecord(
                t,
                20.0,
                50.0,
                draw(st.booleans()),
                draw(st.sampled_from([0.0, 0.3, 0.5, 0.8])),
                draw(st.booleans()),
                draw(st.integers(2, 400)),
            )
        )
        t += gap
    return EnvironmentScript(entries)


@settings(max_examples=300, deadline=None)
@given(scripts(), st.sampled_from([SensorKind.PIR, SensorKind.SOUND, SensorKind.PHOTOELECTRIC]), st.integers(0, 30),
       st.lists(st.integers(1, 50), min_size=1, max_size=20))
def test_edge_triggering_matches_brute_force(env, kind, refractory, steps):
    n = node(9, kind, refractory_s=refractory)
    pred = {
        SensorKind.PIR: lambda r: r.visitor_present,
        SensorKind.SOUND: lambda r: r.sound_level >= 0.5,
        SensorKind.PHOTOELECTRIC: lambda r: r.beam_blocked,
    }[kind]
    times, t = [], 0
    for s in steps:
        t += s
        times.append(t)
    times.append(max(t, env.times[-1]) + 1)
    got = [e.timestamp for e in _run(n, env, times)]
    assert got == _brute_force_edges(env, pred, refractory)


# --------------------------------------------------------------------------
# power


def test_power_table_figures():
    assert power_consumed(node(1, SensorKind.TEMPERATURE_HUMIDITY), (0, 3600)) == 84.0
    assert power_consumed(node(2, SensorKind.PIR), (0, 3600)) == 114.0
    cam = node(6, SensorKind.CAMERA)
    assert power_consumed(cam, (0, 3600)) == 120.0
    assert power_consumed(cam, (0, 3600), ActivityLog(((0, 3600),))) == 126.0
    assert power_consumed(node(3, SensorKind.PHOTOELECTRIC), (50, 50)) == 0.0


def test_power_rejects_reversed_window():
    with pytest.raises(ValueError):
        power_consumed(node(3, SensorKind.PHOTOELECTRIC), (10, 0))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 100_000),
       st.lists(st.tuples(st.integers(0, 200_000), st.integers(1, 600)), max_size=20),
       st.sampled_from(list(SensorKind)))
def test_power_is_additive(a, extra, bursts, kind):
    b = a + extra
    log = ActivityLog(tuple((s, s + d) for s, d in bursts))
    n = node(1, kind)
    whole = power_consumed(n, (0, b), log)
    assert abs(power_consumed(n, (0, a), log) + power_consumed(n, (a, b), log) - whole) <= 1e-9


# --------------------------------------------------------------------------
# camera


def test_capture_is_deterministic_and_checksummed():
    env = env_from({10: {"visitor_present": True, "visitor_distance_cm": 50}})
    cam = node(6, SensorKind.CAMERA)
    a = capture_image(cam, env, 20)
    b = capture_image(cam, env, 20)
    assert a.payload == b.payload
    assert a.checksum == zlib.crc32(a.payload) and a.checksum_ok()
    assert oracle_classify(a.payload).name == "risky"


def test_empty_room_frame_is_acceptable():
    img = capture_image(node(6, SensorKind.CAMERA), env_from({}), 5)
    assert oracle_classify(img.payload).name == "acceptable"


def test_multimodal_capture_label():
    env = env_from({0: {"visitor_present": True, "visitor_distance_cm": 150}})
    img = capture_image(node(6, SensorKind.CAMERA), env, 5, Scheme.MULTIMODAL)
    assert oracle_classify(img.payload).name == "approaching"


def test_capture_requires_camera():
    with pytest.raises(ValueError):
        capture_image(node(2, SensorKind.PIR), env_from({}), 5)


def test_purge_zeroes_then_releases():
    img = capture_image(node(6, SensorKind.CAMERA), env_from({}), 5)
    view = img.payload
    img.purge()
    assert img.purged and len(view) == 0
    seen = []

    class Spy(bytearray):
        def __delitem__(self, key):
            seen.append(bytes(self))
            super().__delitem__(key)

    probe = ImageCapture(1, 0, Spy(b"abc"), 0)
    probe.purge()
    assert seen == [b"\x00\x00\x00"]
