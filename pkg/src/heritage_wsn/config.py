"""Network description: parsing, validation and diffing of ``wsn_config.json``."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Any

from .kinds import (
    DEFAULT_REFRACTORY_S,
    DEFAULT_SOUND_THRESHOLD,
    PowerProfile,
    SensorKind,
    Transport,
)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(ConfigError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass(frozen=True, order=True)
class Violation:
    node_id: int  # -1 for document-level problems
    field: str
    message: str

    def __str__(self) -> str:
        where = "config" if self.node_id < 0 else f"node 0x{self.node_id:04X}"
        return f"{where}.{self.field}: {self.message}"


class ValidationError(ConfigError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class HubSettings:
    batch_window_s: int
    upload_retry_limit: int
    status_port: int
    # Scheduling knobs beyond the core three; all optional in the JSON.
    batch_offset_s: int = 0
    poll_interval_s: int = 60
    system_filler_entries: int = 0
    capture_policy: str = "nearest"


@dataclass(frozen=True)
class NodeSpec:
    id: int
    kind: SensorKind
    transport: Transport
    distance_m: float
    power: PowerProfile
    cadence_s: int | None = None
    poll_interval_s: int | None = None
    refractory_s: int = DEFAULT_REFRACTORY_S
    sound_threshold: float = DEFAULT_SOUND_THRESHOLD


@dataclass(frozen=True)
class WsnConfig:
    version: int
    hub: HubSettings
    nodes: tuple[NodeSpec, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def node(self, node_id: int) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


@dataclass(frozen=True)
class ValidatedConfig(WsnConfig):
    """A WsnConfig that passed :func:`validate_config`."""


@dataclass(frozen=True)
class ChangeSet:
    added: tuple[NodeSpec, ...] = ()
    removed: tuple[int, ...] = ()
    modified: tuple[NodeSpec, ...] = ()

    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.modified)


_HUB_REQUIRED = ("batch_window_s", "upload_retry_limit", "status_port")
_HUB_OPTIONAL = ("batch_offset_s", "poll_interval_s", "system_filler_entries", "capture_policy")
_NODE_REQUIRED = ("id", "kind", "transport", "distance_m", "power")
_NODE_OPTIONAL = ("cadence_s", "poll_interval_s", "refractory_s", "sound_threshold")
_POWER_KEYS = ("idle_mah_per_h", "active_mah_per_h")


def _want_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(name, f"expected integer, got {value!r}")
    return value


def _want_number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(name, f"expected number, got {value!r}")
    return float(value)


def _want_object(value: Any, name: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(name, "expected object")
    return value


def _note_unknown(obj: dict, known: tuple[str, ...], where: str, warnings: list[str]) -> None:
    for key in obj:
        if key not in known:
            msg = f"unknown key {key!r} in {where} ignored"
            log.warning(msg)
            warnings.append(msg)


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{where}.{key}" if where else key, "missing required field")
    return obj[key]


def _parse_hub(obj: dict, warnings: list[str]) -> HubSettings:
    _note_unknown(obj, _HUB_REQUIRED + _HUB_OPTIONAL, "hub", warnings)
    kw = {k: _want_int(_require(obj, k, "hub"), f"hub.{k}") for k in _HUB_REQUIRED}
    for k in ("batch_offset_s", "poll_interval_s", "system_filler_entries"):
        if k in obj:
            kw[k] = _want_int(obj[k], f"hub.{k}")
    if "capture_policy" in obj:
        if not isinstance(obj["capture_policy"], str):
            raise SchemaError("hub.capture_policy", "expected string")
        kw["capture_policy"] = obj["capture_policy"]
    return HubSettings(**kw)


def _parse_node(obj: Any, where: str, warnings: list[str]) -> NodeSpec:
    obj = _want_object(obj, where)
    _note_unknown(obj, _NODE_REQUIRED + _NODE_OPTIONAL, where, warnings)
    for k in _NODE_REQUIRED:
        _require(obj, k, where)
    try:
        kind = SensorKind(obj["kind"])
    except ValueError:
        raise SchemaError(f"{where}.kind", f"unknown sensor kind {obj['kind']!r}") from None
    try:
        transport = Transport(obj["transport"])
    except ValueError:
        raise SchemaError(f"{where}.transport", f"unknown transport {obj['transport']!r}") from None
    power = _want_object(obj["power"], f"{where}.power")
    _note_unknown(power, _POWER_KEYS, f"{where}.power", warnings)
    profile = PowerProfile(
        *(_want_number(_require(power, k, f"{where}.power"), f"{where}.power.{k}") for k in _POWER_KEYS)
    )
    kw: dict[str, Any] = {}
    for k in ("cadence_s", "poll_interval_s", "refractory_s"):
        if k in obj:
            kw[k] = _want_int(obj[k], f"{where}.{k}")
    if "sound_threshold" in obj:
        kw["sound_threshold"] = _want_number(obj["sound_threshold"], f"{where}.sound_threshold")
    return NodeSpec(
        id=_want_int(obj["id"], f"{where}.id"),
        kind=kind,
        transport=transport,
        distance_m=_want_number(obj["distance_m"], f"{where}.distance_m"),
        power=profile,
        **kw,
    )


def parse_config(text: str) -> WsnConfig:
    """Parse a JSON network description.

    Structural problems (bad JSON, missing or mistyped fields, duplicate node
    ids) raise immediately. Value-range checks are left to
    :func:`validate_config`. Unknown keys are logged and collected in
    ``WsnConfig.warnings``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(exc.msg, exc.lineno, exc.colno) from None
    doc = _want_object(doc, "<root>")
    warnings: list[str] = []
    _note_unknown(doc, ("version", "hub", "nodes"), "<root>", warnings)
    version = _want_int(_require(doc, "version", ""), "version")
    hub = _parse_hub(_want_object(_require(doc, "hub", ""), "hub"), warnings)
    raw_nodes = _require(doc, "nodes", "")
    if not isinstance(raw_nodes, list):
        raise SchemaError("nodes", "expected array")
    nodes = tuple(_parse_node(n, f"nodes[{i}]", warnings) for i, n in enumerate(raw_nodes))
    seen: set[int] = set()
    for n in nodes:
        if n.id in seen:
            raise SchemaError("nodes.id", f"duplicate node id 0x{n.id:04X}")
        seen.add(n.id)
    return WsnConfig(version=version, hub=hub, nodes=nodes, warnings=tuple(warnings))


def load_config(path) -> ValidatedConfig:
    with open(path, encoding="utf-8") as fh:
        return validate_config(parse_config(fh.read()))


def _node_violations(n: NodeSpec) -> list[Violation]:
    out = []

    def bad(fld: str, msg: str) -> None:
        out.append(Violation(n.id, fld, msg))

    if not 0 <= n.id <= 0xFFFF:
        bad("id", "id outside 16-bit range")
    if n.kind is SensorKind.CAMERA and n.transport is not Transport.WIFI:
        bad("transport", "camera requires WIFI")
    if n.kind is not SensorKind.CAMERA and n.transport is not Transport.BLE:
        bad("transport", f"{n.kind.value} requires BLE")
    if n.cadence_s is not None:
        if n.cadence_s < 1:
            bad("cadence_s", "cadence below minimum")
        if not n.kind.is_periodic:
            bad("cadence_s", "cadence not allowed on trigger-only node")
    elif n.kind is SensorKind.TEMPERATURE_HUMIDITY:
        bad("cadence_s", "periodic node requires cadence")
    if not n.distance_m > 0:
        bad("distance_m", "distance must be positive")
    if not 0 <= n.power.idle_mah_per_h <= n.power.active_mah_per_h:
        bad("power", "power profile requires 0 <= idle <= active")
    if n.poll_interval_s is not None and n.poll_interval_s < 1:
        bad("poll_interval_s", "poll interval below minimum")
    if n.refractory_s < 0:
        bad("refractory_s", "refractory period negative")
    if not 0.0 <= n.sound_threshold <= 1.0:
        bad("sound_threshold", "threshold outside [0, 1]")
    return out


def validate_config(cfg: WsnConfig) -> ValidatedConfig:
    """Check every invariant and return the config marked as validated.

    All violations are collected, sorted by node id then field, and raised
    together as a :class:`ValidationError`.
    """
    found: list[Violation] = []
    if cfg.version < 1:
        found.append(Violation(-1, "version", "version must be positive"))
    hub = cfg.hub
    if hub.batch_window_s < 1:
        found.append(Violation(-1, "hub.batch_window_s", "batch window below minimum"))
    if hub.upload_retry_limit < 0:
        found.append(Violation(-1, "hub.upload_retry_limit", "retry limit negative"))
    if not 0 <= hub.status_port <= 65535:
        found.append(Violation(-1, "hub.status_port", "port outside TCP range"))
    if hub.batch_offset_s < 0:
        found.append(Violation(-1, "hub.batch_offset_s", "batch offset negative"))
    if hub.poll_interval_s < 1:
        found.append(Violation(-1, "hub.poll_interval_s", "poll interval below minimum"))
    if hub.system_filler_entries < 0:
        found.append(Violation(-1, "hub.system_filler_entries", "filler count negative"))
    if hub.capture_policy not in ("nearest", "all"):
        found.append(Violation(-1, "hub.capture_policy", "policy must be 'nearest' or 'all'"))
    if not cfg.nodes:
        found.append(Violation(-1, "nodes", "at least one node required"))
    counts: dict[int, int] = {}
    for n in cfg.nodes:
        counts[n.id] = counts.get(n.id, 0) + 1
        found.extend(_node_violations(n))
    for node_id, c in counts.items():
        if c > 1:
            found.append(Violation(node_id, "id", "duplicate node id"))
    if found:
        raise ValidationError(sorted(found))
    return ValidatedConfig(version=cfg.version, hub=cfg.hub, nodes=cfg.nodes, warnings=cfg.warnings)


def node_to_dict(n: NodeSpec) -> dict:
    d: dict[str, Any] = {
        "id": n.id,
        "kind": n.kind.value,
        "transport": n.transport.value,
    }
    if n.cadence_s is not None:
        d["cadence_s"] = n.cadence_s
    d["distance_m"] = n.distance_m
    d["power"] = n.power.to_dict()
    if n.poll_interval_s is not None:
        d["poll_interval_s"] = n.poll_interval_s
    if n.refractory_s != DEFAULT_REFRACTORY_S:
        d["refractory_s"] = n.refractory_s
    if n.sound_threshold != DEFAULT_SOUND_THRESHOLD:
        d["sound_threshold"] = n.sound_threshold
    return d


def config_to_dict(cfg: WsnConfig) -> dict:
    return {
        "version": cfg.version,
        "hub": dataclasses.asdict(cfg.hub),
        "nodes": [node_to_dict(n) for n in cfg.nodes],
    }


def serialize_config(cfg: WsnConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def diff_config(old: WsnConfig, new: WsnConfig) -> ChangeSet:
    old_by_id = {n.id: n for n in old.nodes}
    new_by_id = {n.id: n for n in new.nodes}
    return ChangeSet(
        added=tuple(new_by_id[i] for i in sorted(new_by_id.keys() - old_by_id.keys())),
        removed=tuple(sorted(old_by_id.keys() - new_by_id.keys())),
        modified=tuple(
            new_by_id[i]
            for i in sorted(old_by_id.keys() & new_by_id.keys())
            if old_by_id[i] != new_by_id[i]
        ),
    )


def apply_changes(nodes: tuple[NodeSpec, ...], change: ChangeSet) -> tuple[NodeSpec, ...]:
    """Return ``nodes`` with ``change`` applied, sorted by id.

    Raises ``KeyError`` (and changes nothing) if the change removes or
    modifies an unknown id or adds an id that already exists.
    """
    by_id = {n.id: n for n in nodes}
    for n in change.added:
        if n.id in by_id:
            raise KeyError(f"node 0x{n.id:04X} already registered")
    for i in change.removed:
        if i not in by_id:
            raise KeyError(f"node 0x{i:04X} not registered")
    for n in change.modified:
        if n.id not in by_id:
            raise KeyError(f"node 0x{n.id:04X} not registered")
    for i in change.removed:
        del by_id[i]
    for n in change.added + change.modified:
        by_id[n.id] = n
    return tuple(by_id[i] for i in sorted(by_id))
