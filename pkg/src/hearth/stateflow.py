"""The data-flow channel: sensor readings -> room state -> whole-home view.

Each layer only knows its own concern. The sensor layer tracks per-sensor
latest values and has no notion of rooms; the concrete layer aggregates
per (room, quantity) and has no notion of residents; only the generic layer
carries presence, activities, and time context. Snapshots of the generic +
actuator state are appended to an event repository for the learner.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import HearthError
from .model import ContinuousDomain, DiscreteDomain, HomeConfig, norm_quantity
from .timeutil import TimeContext

STALE_AFTER_SECONDS = 300.0


class UnknownSensor(HearthError):
    pass


class UnknownResident(HearthError):
    pass


class SchemaMismatch(HearthError):
    pass


@dataclass(frozen=True)
class SensorReading:
    sensor_id: str
    value: float
    units: str
    timestamp: float  # simulated clock, seconds


class SensorStateManager:
    """Latest value per sensor; out-of-order readings are dropped and counted."""

    def __init__(self, config: HomeConfig):
        self._known = {s.id for s in config.sensors}
        self.latest: dict[str, SensorReading] = {}
        self.discarded = 0

    def ingest_reading(self, reading: SensorReading) -> None:
        if reading.sensor_id not in self._known:
            raise UnknownSensor(f"no sensor {reading.sensor_id!r} in the home config",
                                sensor=reading.sensor_id)
        current = self.latest.get(reading.sensor_id)
        if current is not None and reading.timestamp < current.timestamp:
            self.discarded += 1
            return
        self.latest[reading.sensor_id] = reading


@dataclass(frozen=True)
class QuantityState:
    value: float | None
    units: str
    staleness: float | None  # seconds since last reading; None if never read

    @property
    def known(self) -> bool:
        return self.value is not None and (
            self.staleness is None or self.staleness <= STALE_AFTER_SECONDS)


@dataclass(frozen=True)
class ConcreteState:
    """Per-room aggregated quantities plus cumulative consumption meters."""

    rooms: dict[str, dict[str, QuantityState]]
    meters: dict[str, float] = field(default_factory=dict)

    def value(self, room: str, quantity: str) -> float | None:
        state = self.rooms.get(room, {}).get(quantity)
        return state.value if state is not None and state.known else None


def build_concrete_state(sensors: SensorStateManager, config: HomeConfig,
                         clock: float, meters: dict[str, float] | None = None
                         ) -> ConcreteState:
    """Aggregate sensor readings per (room, quantity); same-quantity sensors
    in a room are averaged."""
    rooms: dict[str, dict[str, QuantityState]] = {}
    for room in config.rooms:
        per_quantity: dict[str, QuantityState] = {}
        for quantity in config.measured_quantities():
            hits = config.sensors_for(room, quantity)
            values = []
            newest: float | None = None
            units = hits[0].units if hits else ""
            for sensor in hits:
                reading = sensors.latest.get(sensor.id)
                if reading is None:
                    continue
                values.append(reading.value)
                newest = reading.timestamp if newest is None else max(newest, reading.timestamp)
            if values:
                staleness = clock - newest if newest is not None else 0.0
                value = sum(values) / len(values)
                if staleness > STALE_AFTER_SECONDS:
                    per_quantity[quantity] = QuantityState(None, units, staleness)
                else:
                    per_quantity[quantity] = QuantityState(value, units, staleness)
            else:
                per_quantity[quantity] = QuantityState(None, units, None)
        rooms[room] = per_quantity
    return ConcreteState(rooms=rooms, meters=dict(meters or {}))


@dataclass(frozen=True)
class GenericState:
    """The whole-home view the rule interpreter evaluates against."""

    presence: dict[str, str | None]        # resident -> room or None (absent)
    activity: dict[str, str | None]
    time: TimeContext
    rooms: dict[str, dict[str, QuantityState]]
    tick_seconds: int = 60

    def present_in(self, resident: str, location: str) -> bool | None:
        where = self.presence.get(resident)
        if where is None:
            return False
        if location.lower() in ("home", "allrooms"):
            return True
        return where.lower() == location.lower()

    def quantity_value(self, quantity: str, room: str | None) -> float | None:
        if room is not None:
            state = self.rooms.get(room, {}).get(quantity)
            return state.value if state is not None and state.known else None
        known = [q.value for per in self.rooms.values()
                 for name, q in per.items()
                 if norm_quantity(name) == norm_quantity(quantity) and q.known]
        if not known:
            return None
        return sum(known) / len(known)


def build_generic_state(concrete: ConcreteState, presence: dict[str, str | None],
                        activity: dict[str, str | None], moment: dt.datetime,
                        config: HomeConfig, tick_seconds: int = 60,
                        diagnostics: list[str] | None = None) -> GenericState:
    """Combine room state with presence/activity inputs and the calendar."""
    clean_presence: dict[str, str | None] = {name: None for name in config.residents}
    for name, where in presence.items():
        canonical = config.find_resident(name)
        if canonical is None:
            raise UnknownResident(f"presence input for unknown resident {name!r}",
                                  resident=name)
        if where is not None and config.find_room(where) is None:
            raise UnknownResident(f"presence input places {name!r} in unknown room "
                                  f"{where!r}", resident=name, room=where)
        clean_presence[canonical] = config.find_room(where) if where else None
    clean_activity: dict[str, str | None] = {name: None for name in config.residents}
    for name, act in activity.items():
        canonical = config.find_resident(name)
        if canonical is None:
            raise UnknownResident(f"activity input for unknown resident {name!r}",
                                  resident=name)
        if act is not None and clean_presence.get(canonical) is None:
            # An absent resident cannot have a home activity; drop it.
            if diagnostics is not None:
                diagnostics.append(f"activity {act!r} dropped: {canonical} is absent")
            continue
        clean_activity[canonical] = act
    return GenericState(
        presence=clean_presence,
        activity=clean_activity,
        time=TimeContext(moment, config.holidays, config.hemisphere),
        rooms=concrete.rooms,
        tick_seconds=tick_seconds,
    )


class Discretizer:
    """Equal-width binning of continuous variables over their declared domain."""

    def __init__(self, config: HomeConfig, bins: int = 5,
                 overrides: dict[str, int] | None = None):
        self.edges: dict[str, list[float]] = {}
        overrides = overrides or {}
        for decl in config.variables.values():
            if isinstance(decl.domain, ContinuousDomain):
                n = overrides.get(decl.name, bins)
                lo, hi = decl.domain.lo, decl.domain.hi
                width = (hi - lo) / n
                self.edges[norm_quantity(decl.quantity)] = [lo + i * width for i in range(n + 1)]

    def bin_label(self, quantity: str, value: float | None) -> str:
        if value is None:
            return "unknown"
        edges = self.edges.get(norm_quantity(quantity))
        if edges is None:
            return str(value)
        for i in range(len(edges) - 1):
            last = i == len(edges) - 2
            if edges[i] <= value < edges[i + 1] or (last and value >= edges[i]):
                return f"b{i}"
        return "b0" if value < edges[0] else f"b{len(edges) - 2}"

    def bin_edges(self, quantity: str, label: str) -> tuple[float, float] | None:
        edges = self.edges.get(norm_quantity(quantity))
        if edges is None or not label.startswith("b"):
            return None
        i = int(label[1:])
        return edges[i], edges[i + 1]


@dataclass(frozen=True)
class EventRecord:
    timestamp: float
    values: dict[str, str]

    def to_json(self) -> str:
        return json.dumps({"t": self.timestamp, "v": dict(sorted(self.values.items()))},
                          separators=(",", ":"), sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "EventRecord":
        doc = json.loads(line)
        return EventRecord(timestamp=float(doc["t"]), values=dict(doc["v"]))


@dataclass(frozen=True)
class ColumnSpec:
    """Domain plus decode semantics for one snapshot column."""

    domain: tuple[str, ...]
    kind: str                    # sensor | presence | activity | time | device
    quantity: str | None = None
    room: str | None = None
    resident: str | None = None
    location: str | None = None
    device: str | None = None
    facet: str | None = None     # for time columns: period | dayType | season


def event_columns(config: HomeConfig) -> dict[str, ColumnSpec]:
    """Fixed snapshot schema with semantics; the column order never changes.

    Causes: sensor bins per (quantity, room), presence booleans, activities,
    time context. Effects: one state variable per device. Meter columns are
    excluded here; they ride along in records under meter_* names.
    """
    columns: dict[str, ColumnSpec] = {}
    bins = tuple(f"b{i}" for i in range(5)) + ("unknown",)
    for room in config.rooms:
        for quantity in config.measured_quantities():
            if config.sensors_for(room, quantity):
                columns[f"{quantity}_{room}"] = ColumnSpec(
                    bins, "sensor", quantity=quantity, room=room)
    activities = ("none",) + tuple(config.registry.names("Activity"))
    for resident in config.residents:
        columns[f"{resident}_IN_Home"] = ColumnSpec(
            ("true", "false"), "presence", resident=resident, location="Home")
        for room in config.rooms:
            columns[f"{resident}_IN_{room}"] = ColumnSpec(
                ("true", "false"), "presence", resident=resident, location=room)
        columns[f"{resident}_ACTIVITY"] = ColumnSpec(
            activities, "activity", resident=resident)
    columns["period"] = ColumnSpec(("Morning", "Afternoon", "Evening", "Night"),
                                   "time", facet="period")
    columns["dayType"] = ColumnSpec(("weekday", "weekend", "holiday"),
                                    "time", facet="dayType")
    columns["season"] = ColumnSpec(("Spring", "Summer", "Autumn", "Winter"),
                                   "time", facet="season")
    for device in config.devices:
        decl = config.variables[device.variable]
        if isinstance(decl.domain, DiscreteDomain) and device.mode == "direct":
            domain = tuple(v.lower() for v in decl.domain.values)
        else:
            domain = ("on", "off")
        columns[device.id] = ColumnSpec(domain, "device", device=device.id,
                                        room=device.room)
    return columns


def event_schema(config: HomeConfig) -> dict[str, tuple[str, ...]]:
    return {name: spec.domain for name, spec in event_columns(config).items()}


def effect_variables(config: HomeConfig) -> tuple[str, ...]:
    return tuple(d.id for d in config.devices)


def snapshot_event(generic: GenericState, concrete: ConcreteState,
                   actuator_states: dict[str, str], discretizer: Discretizer,
                   config: HomeConfig, timestamp: float) -> EventRecord:
    """One fixed-schema discretized record of the home at this instant."""
    schema = event_schema(config)
    values: dict[str, str] = {}
    for room in config.rooms:
        for quantity in config.measured_quantities():
            name = f"{quantity}_{room}"
            if name not in schema:
                continue
            state = concrete.rooms.get(room, {}).get(quantity)
            value = state.value if state is not None and state.known else None
            values[name] = discretizer.bin_label(quantity, value)
    for resident in config.residents:
        where = generic.presence.get(resident)
        values[f"{resident}_IN_Home"] = "true" if where else "false"
        for room in config.rooms:
            values[f"{resident}_IN_{room}"] = "true" if where == room else "false"
        values[f"{resident}_ACTIVITY"] = generic.activity.get(resident) or "none"
    values["period"] = generic.time.period
    values["dayType"] = generic.time.day_type
    values["season"] = generic.time.season
    for device in config.devices:
        domain = schema[device.id]
        fallback = "off" if "off" in domain else domain[-1]
        values[device.id] = actuator_states.get(device.id, fallback)
    if set(values) != set(schema):
        missing = set(schema) ^ set(values)
        raise SchemaMismatch(f"snapshot does not match the fixed schema: {sorted(missing)}")
    for name, domain in schema.items():
        if values[name] not in domain:
            raise SchemaMismatch(
                f"{name}={values[name]!r} outside its domain {domain}", variable=name)
    for meter, total in concrete.meters.items():
        values[f"meter_{meter}"] = f"{total:.3f}"
    return EventRecord(timestamp=timestamp, values=values)


class Repository:
    """Append-only event log, one JSON record per line."""

    def __init__(self, path: Path | None = None):
        self.path = path
        self.records: list[EventRecord] = []
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("")

    def append(self, record: EventRecord) -> None:
        if self.records and record.timestamp <= self.records[-1].timestamp:
            raise SchemaMismatch("repository timestamps must strictly increase")
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(record.to_json() + "\n")


def replay_repository(path: Path, corruption_limit: float = 0.01
                      ) -> tuple[list[EventRecord], int]:
    """Read a repository file; skip corrupt lines up to the tolerated ratio."""
    records: list[EventRecord] = []
    corrupt = 0
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    for line in lines:
        try:
            records.append(EventRecord.from_json(line))
        except (ValueError, KeyError, TypeError):
            corrupt += 1
    if lines and corrupt / len(lines) > corruption_limit:
        raise SchemaMismatch(
            f"{corrupt}/{len(lines)} corrupt lines exceeds the tolerated ratio",
            corrupt=corrupt, total=len(lines))
    return records, corrupt
