"""Deterministic discrete-event scheduler for one hub and its nodes.

All components share the simulated clock. Ties at equal timestamps are broken
by a fixed priority, then by insertion order, so a run is fully determined by
(config, environment, seed).
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import random
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable

from .config import ChangeSet, NodeSpec, ValidatedConfig
from .hub import Hub
from .kinds import SensorKind
from .nodes import (
    ActivityLog,
    EnvironmentScript,
    ImageCapture,
    NodeState,
    SensorReading,
    capture_image,
    effective_cadence,
    initial_state,
    power_consumed,
    sample_environment,
    step_node,
)
from .transport import (
    ChannelModel,
    Outcome,
    SequenceCounter,
    decode_reading,
    encode_reading,
    transmit_ble,
    transmit_wifi,
)
from .vision import Scheme, behaviour_class

# same-time ordering
P_CHANGE = 0
P_STEP = 1
P_DELIVER = 2
P_CAPTURE = 3
P_IMAGE = 4
P_CHECK = 5
P_FILLER = 6
P_CLOSE = 7


class SimulationError(RuntimeError):
    def __init__(self, t: int, component: str, cause: Exception):
        super().__init__(f"t={t}s [{component}] {cause}")
        self.time = t
        self.component = component
        self.cause = cause


@dataclass
class SimStats:
    emitted: int = 0
    delivered: int = 0
    lost: int = 0
    images_sent: int = 0
    images_failed: int = 0
    latencies: dict[str, set] = field(default_factory=lambda: defaultdict(set))
    truth: dict[str, int] = field(default_factory=dict)  # image_id -> embedded class


def stream_name(event) -> str:
    if isinstance(event, SensorReading):
        return f"{event.kind.value}/{event.value_name}"
    if isinstance(event, ImageCapture):
        return "camera/image"
    return f"{event.kind.value}/trigger"


class Simulation:
    def __init__(
        self,
        config: ValidatedConfig,
        env: EnvironmentScript,
        hub: Hub,
        horizon: int,
        seed: int = 0,
        channel: ChannelModel | None = None,
        scheme: Scheme = Scheme.BINARY,
        start: int = 0,
        acceleration: float | None = None,
        wifi_fault: Callable[[bytearray], None] | None = None,
    ):
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.config = config
        self.env = env
        self.hub = hub
        self.start = start
        self.horizon = start + horizon
        self.channel = channel or ChannelModel()
        self.rng = random.Random(seed)
        self.scheme = scheme
        self.acceleration = acceleration
        self.wifi_fault = wifi_fault
        self.stats = SimStats()
        self.sequences = SequenceCounter()
        self.states: dict[int, NodeState] = {}
        self.generation: dict[int, int] = {}
        self.radio_free: dict[int, int] = defaultdict(int)
        self.camera_free: dict[int, int] = defaultdict(int)
        self.camera_activity: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.now = start
        self._heap: list[tuple] = []
        self._counter = itertools.count()
        self._last_close = start
        self._done = False

        for node in sorted(hub.registry.values(), key=lambda n: n.id):
            self._register(node, start, first=True)
        hs = config.hub
        first_close = start + hs.batch_offset_s + hs.batch_window_s
        if first_close <= self.horizon:
            self._push(first_close, P_CLOSE, "close", None)
        n = hs.system_filler_entries
        for k in range(n):
            self._push(start + ((k + 1) * horizon) // n, P_FILLER, "filler", k)

    # scheduling --------------------------------------------------------------

    def _push(self, t: float, prio: int, kind: str, payload: Any) -> None:
        heapq.heappush(self._heap, (t, prio, next(self._counter), kind, payload))

    def _register(self, node: NodeSpec, t: int, first: bool = False) -> None:
        self.generation[node.id] = self.generation.get(node.id, 0) + 1
        self.states.setdefault(node.id, initial_state(t))
        self._schedule_step(node, t, inclusive=first)
        poll = node.poll_interval_s or self.config.hub.poll_interval_s
        nxt = (t // poll + 1) * poll
        if nxt <= self.horizon:
            self._push(nxt, P_CHECK, "check", (node.id, self.generation[node.id]))

    def _schedule_step(self, node: NodeSpec, after: int, inclusive: bool = False) -> None:
        gen = self.generation[node.id]
        if node.kind.is_periodic:
            cadence = effective_cadence(node)
            nxt = (after // cadence + 1) * cadence
        elif node.kind.is_trigger:
            times = self.env.times
            i = bisect.bisect_left(times, after) if inclusive else bisect.bisect_right(times, after)
            if i >= len(times):
                return
            nxt = max(times[i], after)
        else:
            return
        if nxt <= self.horizon:
            self._push(nxt, P_STEP, "step", (node.id, gen))

    def schedule_change(self, t: int, change: ChangeSet) -> None:
        self._push(t, P_CHANGE, "change", change)

    # running ----------------------------------------------------------------

    def run(self) -> Hub:
        wall0 = time.perf_counter()
        while self._heap:
            t, _, _, kind, payload = heapq.heappop(self._heap)
            if self.acceleration:
                lag = wall0 + (t - self.start) / self.acceleration - time.perf_counter()
                if lag > 0:
                    time.sleep(lag)
            self.now = t
            self.hub.advance(t)
            try:
                getattr(self, f"_on_{kind}")(t, payload)
            except Exception as exc:
                raise SimulationError(t, kind, exc) from exc
        end = max(self.now, self.horizon)
        self.hub.advance(end)
        self.hub.compile_batch((self._last_close, end))
        self.hub.flush_uploads(end)
        self.hub.ledger.flush()
        self._done = True
        return self.hub

    def _on_change(self, t: int, change: ChangeSet) -> None:
        self.hub.apply_config_change(change)
        for node_id in change.removed:
            self.states.pop(node_id, None)
            self.generation[node_id] = self.generation.get(node_id, 0) + 1
        for node in change.added + change.modified:
            self._register(node, t)

    def _current(self, node_id: int, gen: int) -> NodeSpec | None:
        if self.generation.get(node_id) != gen:
            return None
        return self.hub.registry.get(node_id)

    def _on_step(self, t: int, payload) -> None:
        node = self._current(*payload)
        if node is None:
            return
        events, self.states[node.id] = step_node(node, self.states[node.id], t, self.env)
        for ev in events:
            self._send_ble(node, ev)
        self._schedule_step(node, t)

    def _send_ble(self, node: NodeSpec, event) -> None:
        self.stats.emitted += 1
        adv = encode_reading(event, self.sequences.next(node.id))
        depart = max(event.timestamp, self.radio_free[node.id])
        delivery = transmit_ble(adv, self.channel, node.distance_m, self.rng)
        arrival = depart + delivery.latency_s
        self.radio_free[node.id] = arrival
        if delivery.delivered:
            self._push(arrival, P_DELIVER, "deliver", delivery.advertisement.to_bytes())
        else:
            self.stats.lost += 1

    def _on_deliver(self, t: int, raw: bytes) -> None:
        event = decode_reading(raw)
        self.hub.ingest(event, t)
        self.stats.delivered += 1
        self.stats.latencies[stream_name(event)].add(t - event.timestamp)
        self._dispatch_captures(t)

    def _dispatch_captures(self, t: int) -> None:
        while self.hub.pending_captures:
            cmd = self.hub.pending_captures.popleft()
            begin = max(t, self.camera_free[cmd.camera_id])
            self.camera_free[cmd.camera_id] = begin + self.channel.wifi_duration_s
            self._push(begin, P_CAPTURE, "capture", cmd)

    def _on_capture(self, t: int, cmd) -> None:
        camera = self.hub.registry.get(cmd.camera_id)
        if camera is None or camera.kind is not SensorKind.CAMERA:
            self.hub.log_system(
                t, {"event": "capture_command_failed", "reason": f"camera 0x{cmd.camera_id:04X} removed"}, cmd.trigger_node
            )
            return
        img = capture_image(camera, self.env, t, self.scheme)
        rec = sample_environment(self.env, t)
        self.stats.truth[img.image_id] = behaviour_class(rec.visitor_present, rec.visitor_distance_cm, self.scheme)
        transfer = transmit_wifi(img, self.channel, self.wifi_fault)
        img.purge()  # the camera keeps nothing once the frame has left
        done = t + transfer.duration_s
        self.camera_activity[camera.id].append((t, done))
        if transfer.outcome is Outcome.DELIVERED:
            self.stats.images_sent += 1
            self._push(done, P_IMAGE, "image", transfer.received)
        else:
            self.stats.images_failed += 1
            self.hub.log_system(
                t,
                {"event": "image_transfer_failed", "reason": transfer.diagnostic, "duration_s": transfer.duration_s},
                camera.id,
            )

    def _on_image(self, t: int, img: ImageCapture) -> None:
        self.stats.latencies[stream_name(img)].add(t - img.timestamp)
        self.hub.ingest(img, t)

    def _on_check(self, t: int, payload) -> None:
        node = self._current(*payload)
        if node is None:
            return
        self.hub.routine_check(node, t)
        poll = node.poll_interval_s or self.config.hub.poll_interval_s
        if t + poll <= self.horizon:
            self._push(t + poll, P_CHECK, "check", payload)

    def _on_filler(self, t: int, k: int) -> None:
        self.hub.log_system(t, {"event": "filler", "index": k})

    def _on_close(self, t: int, _payload) -> None:
        self.hub.compile_batch((self._last_close, t))
        self._last_close = t
        self.hub.flush_uploads(t)
        nxt = t + self.config.hub.batch_window_s
        if nxt <= self.horizon:
            self._push(nxt, P_CLOSE, "close", None)

    # accounting -------------------------------------------------------------

    def power_per_hour(self) -> dict[int, float]:
        """Average mAh per hour over the horizon for every node that was registered."""
        window = (self.start, self.horizon)
        hours = (self.horizon - self.start) / 3600.0
        out = {}
        for node in sorted(self.hub.registry.values(), key=lambda n: n.id):
            log = ActivityLog(tuple(self.camera_activity.get(node.id, ())))
            out[node.id] = power_consumed(node, window, log) / hours
        return out
