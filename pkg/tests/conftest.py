from __future__ import annotations

import pytest

from heritage_wsn import fixtures
from heritage_wsn.config import HubSettings, NodeSpec, ValidatedConfig, load_config, validate_config, WsnConfig
from heritage_wsn.kinds import TABLE_POWER, SensorKind, Transport
from heritage_wsn.nodes import EnvironmentScript, EnvRecord
from heritage_wsn.scenario import museum_spec, run_scenario

CALM = dict(
    temperature_c=20.0,
    humidity_pct=50.0,
    visitor_present=False,
    sound_level=0.1,
    beam_blocked=False,
    visitor_distance_cm=400,
)


def env_from(changes: dict[int, dict], start: int = 0) -> EnvironmentScript:
    """Step-function script from sparse ``{time: {field: value}}`` changes."""
    state = dict(CALM)
    times = sorted(set(changes) | {start})
    entries = []
    for t in times:
        state.update(changes.get(t, {}))
        entries.append(EnvRecord(time=t, **state))
    return EnvironmentScript(entries)


def node(node_id: int, kind: SensorKind, distance_m: float = 2.0, **kw) -> NodeSpec:
    transport = Transport.WIFI if kind is SensorKind.CAMERA else Transport.BLE
    if kind is SensorKind.TEMPERATURE_HUMIDITY:
        kw.setdefault("cadence_s", 300)
    return NodeSpec(node_id, kind, transport, distance_m, TABLE_POWER[kind], **kw)


def config_of(*nodes: NodeSpec, **hub_kw) -> ValidatedConfig:
    hub = dict(batch_window_s=300, upload_retry_limit=3, status_port=0)
    hub.update(hub_kw)
    return validate_config(WsnConfig(1, HubSettings(**hub), tuple(nodes)))


@pytest.fixture(scope="session")
def canonical_config() -> ValidatedConfig:
    return load_config(fixtures.CANONICAL_CONFIG)


@pytest.fixture(scope="session")
def museum_run(tmp_path_factory):
    """One full 24 h museum run shared by every test that only reads it."""
    out = tmp_path_factory.mktemp("museum")
    report = run_scenario(museum_spec(seed=0), out)
    return report, out


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
