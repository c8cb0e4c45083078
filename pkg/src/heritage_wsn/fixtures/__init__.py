"""Bundled fixtures: canonical six-node config, the 24 h museum scenario and
cost profiles. ``author_museum_env`` regenerates ``museum_24h.csv``."""

from __future__ import annotations

import math
import random
from pathlib import Path

from ..nodes import EnvironmentScript, EnvRecord

ROOT = Path(__file__).resolve().parent
CANONICAL_CONFIG = ROOT / "wsn_config.json"
MUSEUM_DIR = ROOT / "museum_24h"
MUSEUM_CONFIG = MUSEUM_DIR / "wsn_config.json"
MUSEUM_ENV = MUSEUM_DIR / "museum_24h.csv"
COST_PROFILES = ROOT / "cost_profiles.json"

DAY_S = 86_400
OPENING_S = 9 * 3600
EPISODES = 80
EPISODE_SPACING_S = 360
CLIMATE_STEP_S = 600
AUTHOR_SEED = 20_240_601

# Per-episode offsets (seconds after the visitor enters).
BEAM_CLEAR_S = 2
SOUND_START_S = 20
SOUND_END_S = 23
APPROACH_S = 30
LEAVE_S = 150


def _climate(t: int, rng: random.Random) -> tuple[float, float]:
    phase = 2 * math.pi * (t - 6 * 3600) / DAY_S
    temp = 20.0 + 2.0 * math.sin(phase) + rng.uniform(-0.2, 0.2)
    hum = 50.0 - 5.0 * math.sin(phase) + rng.uniform(-0.5, 0.5)
    return round(temp, 2), round(hum, 2)


def episode_plan(i: int) -> dict:
    """Which trigger sources episode ``i`` exercises.

    80 visitor entries (PIR), 60 beam crossings (every episode except i % 4 == 3)
    and 59 sound spikes (i % 4 != 0, skipping the final episode): 199 triggers.
    """
    return {
        "beam": i % 4 != 3,
        "sound": i % 4 != 0 and i != EPISODES - 1,
    }


def author_museum_env(seed: int = AUTHOR_SEED) -> EnvironmentScript:
    rng = random.Random(seed)
    # time -> partial state changes; climate rows every CLIMATE_STEP_S
    changes: dict[int, dict] = {}
    for t in range(0, DAY_S + 1, CLIMATE_STEP_S):
        temp, hum = _climate(t, rng)
        changes.setdefault(t, {}).update(temperature_c=temp, humidity_pct=hum)
    for i in range(EPISODES):
        plan = episode_plan(i)
        t0 = OPENING_S + i * EPISODE_SPACING_S + rng.randrange(5, 60)
        far = rng.randrange(220, 390)
        near = rng.randrange(30, 95) if rng.random() < 0.35 else rng.randrange(120, 300)
        changes.setdefault(t0, {}).update(visitor_present=True, visitor_distance_cm=far, beam_blocked=plan["beam"])
        if plan["beam"]:
            changes.setdefault(t0 + BEAM_CLEAR_S, {}).update(beam_blocked=False)
        if plan["sound"]:
            changes.setdefault(t0 + SOUND_START_S, {}).update(sound_level=round(rng.uniform(0.6, 0.95), 2))
            changes.setdefault(t0 + SOUND_END_S, {}).update(sound_level=round(rng.uniform(0.05, 0.3), 2))
        changes.setdefault(t0 + APPROACH_S, {}).update(visitor_distance_cm=near)
        changes.setdefault(t0 + LEAVE_S, {}).update(visitor_present=False, visitor_distance_cm=400)
    state = {
        "temperature_c": 0.0,
        "humidity_pct": 0.0,
        "visitor_present": False,
        "sound_level": 0.1,
        "beam_blocked": False,
        "visitor_distance_cm": 400,
    }
    entries = []
    for t in sorted(changes):
        state.update(changes[t])
        entries.append(EnvRecord(time=t, **state))
    return EnvironmentScript(entries)


def museum_targets() -> dict:
    return {
        "total": 14_149,
        "ROUTINE_CHECK": 10_636,
        "TRIGGER": 199,
        "SENSOR_READING": 769,
        "NETWORK_REQUEST": 526,
        "IMAGE_CAPTURE": 199,
    }


DATASETS = ROOT / "datasets"
DATASET_SEEDS = {"binary": 750, "multimodal": 751}
DATASET_BINARY = DATASETS / "synthetic_750_binary"
DATASET_MULTIMODAL = DATASETS / "synthetic_750_multimodal"
