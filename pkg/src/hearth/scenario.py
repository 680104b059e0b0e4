"""Scenario files: a seeded, scripted timeline that drives a simulation run."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import HearthError
from .model import HomeConfig

EVENT_KINDS = ("ambient", "presence", "activity", "device", "override",
               "proposal", "recommendation_verdict")


class ConfigError(HearthError):
    pass


@dataclass(frozen=True)
class ScenarioEvent:
    at_tick: int
    kind: str
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    seed: int = 0
    start: dt.datetime = dt.datetime(2025, 6, 16, 6, 30)
    tick_seconds: int = 60
    duration_ticks: int = 120
    events: tuple[ScenarioEvent, ...] = ()

    def events_at(self, tick: int) -> list[ScenarioEvent]:
        return [e for e in self.events if e.at_tick == tick]


def load_scenario(document: dict | str | Path, config: HomeConfig | None = None
                  ) -> Scenario:
    if isinstance(document, Path):
        document = json.loads(document.read_text())
    elif isinstance(document, str):
        document = json.loads(document)
    events = []
    for entry in document.get("events", ()):
        kind = entry.get("type")
        if kind not in EVENT_KINDS:
            raise ConfigError(f"unknown scenario event type {kind!r}")
        payload = {k: v for k, v in entry.items() if k not in ("type", "at")}
        events.append(ScenarioEvent(at_tick=int(entry.get("at", 0)), kind=kind,
                                    payload=payload))
    events.sort(key=lambda e: e.at_tick)
    scenario = Scenario(
        seed=int(document.get("seed", 0)),
        start=dt.datetime.fromisoformat(document.get("start", "2025-06-16T06:30:00")),
        tick_seconds=int(document.get("tick_seconds", 60)),
        duration_ticks=int(document.get("duration_ticks", 120)),
        events=tuple(events))
    if config is not None:
        _check_references(scenario, config)
    return scenario


def _check_references(scenario: Scenario, config: HomeConfig) -> None:
    for event in scenario.events:
        p = event.payload
        if event.kind in ("presence", "activity"):
            if config.find_resident(p.get("resident", "")) is None:
                raise ConfigError(f"scenario references unknown resident "
                                  f"{p.get('resident')!r}", event=event.kind)
        if event.kind == "device" and config.device(p.get("device", "")) is None:
            raise ConfigError(f"scenario references unknown device "
                              f"{p.get('device')!r}")
        room = p.get("room")
        if room is not None and config.find_room(room) is None:
            raise ConfigError(f"scenario references unknown room {room!r}",
                              event=event.kind)
