"""Static description of a home: keyword registry, variables, devices, rooms.

A loaded :class:`HomeConfig` is immutable and shared read-only by every other
subsystem; rules stay decoupled from layout because all room/variable/device
resolution funnels through it.
"""

from __future__ import annotations

import datetime as dt
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import HearthError

CATEGORIES = ("Location", "Role", "Resident", "Activity", "DateTimeEvent", "Action")

DEFAULT_KEYWORDS: dict[str, tuple[str, ...]] = {
    "Location": ("Home", "Kitchen", "LivingRoom", "BedRoom", "AllRooms"),
    "Role": (),
    "Resident": (),
    "Activity": (),
    "DateTimeEvent": (
        "AM", "PM", "Morning", "Afternoon", "Evening", "Night",
        "Holiday", "Xmas", "Easter", "Weekend", "Today", "Tomorrow",
        "Minute", "Hour", "Day", "Week", "Month", "Year", "Always",
        # Seasons are rule-visible time atoms with documented month semantics.
        "Spring", "Summer", "Autumn", "Winter",
    ),
    "Action": ("SET", "KEEP", "ON", "OFF", "CLOSE", "OPEN", "NOTIFY", "WARN"),
}

_IDENT_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


class UnknownCategory(HearthError):
    pass


class DuplicateKeyword(HearthError):
    pass


class InvalidIdentifier(HearthError):
    pass


class SchemaError(HearthError):
    pass


class DanglingReference(HearthError):
    pass


class KeywordRegistry:
    """Keyword names per category; case-insensitive lookup, canonical storage."""

    def __init__(self):
        # category -> lowercase name -> (canonical name, provenance)
        self._entries: dict[str, dict[str, tuple[str, str]]] = {c: {} for c in CATEGORIES}
        for category, names in DEFAULT_KEYWORDS.items():
            for name in names:
                self._entries[category][name.lower()] = (name, "system-default")

    def register(self, category: str, name: str, provenance: str = "user-defined") -> None:
        if category not in self._entries:
            raise UnknownCategory(f"unknown keyword category {category!r}", category=category)
        if not _IDENT_RE.match(name):
            raise InvalidIdentifier(f"{name!r} is not a valid identifier", name=name)
        bucket = self._entries[category]
        if name.lower() in bucket:
            raise DuplicateKeyword(
                f"{bucket[name.lower()][0]!r} already registered in {category}",
                category=category, name=name)
        bucket[name.lower()] = (name, provenance)

    def resolve(self, name: str) -> tuple[str, str] | None:
        """(category, canonical name) for a case-insensitive match, else None."""
        key = name.lower()
        for category in CATEGORIES:
            hit = self._entries[category].get(key)
            if hit is not None:
                return category, hit[0]
        return None

    def resolve_in(self, category: str, name: str) -> str | None:
        hit = self._entries.get(category, {}).get(name.lower())
        return hit[0] if hit else None

    def names(self, category: str) -> tuple[str, ...]:
        return tuple(canon for canon, _ in self._entries[category].values())

    def provenance(self, category: str, name: str) -> str | None:
        hit = self._entries.get(category, {}).get(name.lower())
        return hit[1] if hit else None


def register_keyword(registry: KeywordRegistry, category: str, name: str) -> KeywordRegistry:
    """Register a user keyword and return the registry (fluent form)."""
    registry.register(category, name)
    return registry


def resolve_keyword(registry: KeywordRegistry, name: str) -> tuple[str, str] | None:
    return registry.resolve(name)


@dataclass(frozen=True)
class DiscreteDomain:
    values: tuple[str, ...]

    def contains(self, value: str) -> bool:
        return value.lower() in {v.lower() for v in self.values}

    def canonical(self, value: str) -> str | None:
        for v in self.values:
            if v.lower() == value.lower():
                return v
        return None


@dataclass(frozen=True)
class ContinuousDomain:
    lo: float
    hi: float

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class VariableDecl:
    """A rule-visible variable; the name postfix fixes its kind.

    Measured variables end in VAL, controlled ones in SET (discrete domain)
    or KEEP (continuous domain).
    """

    name: str
    quantity: str
    kind: str  # VAL | SET | KEEP
    units: str
    domain: DiscreteDomain | ContinuousDomain

    @property
    def measured(self) -> bool:
        return self.kind == "VAL"

    @property
    def controlled(self) -> bool:
        return not self.measured


@dataclass(frozen=True)
class SensorDescriptor:
    id: str
    room: str
    quantity: str
    units: str


@dataclass(frozen=True)
class DeviceDescriptor:
    """A physical actuator: which variable it serves and how it is driven."""

    id: str
    room: str
    variable: str           # served controlled variable name
    mode: str               # direct | internal-loop | external-loop
    effect: float           # served-quantity units per simulated minute at full output
    adapter: str
    cost: float = 1.0       # actuation-cost rank used by the multi-device cascade


def norm_name(text: str) -> str:
    """Identifier normalization for variable-name matching."""
    return text.lower().replace("_", "")


def norm_quantity(text: str) -> str:
    """Quantity normalization: case/underscore-insensitive, plural fold,
    optional ROOM_ prefix dropped (ROOM_TEMPERATURE names the Temperature
    quantity of a room-scoped variable)."""
    s = norm_name(text)
    if s.startswith("room") and len(s) > 4:
        s = s[4:]
    if s.endswith("s") and len(s) > 2:
        s = s[:-1]
    return s


@dataclass(frozen=True)
class HomeConfig:
    rooms: tuple[str, ...]
    residents: dict[str, str]                  # name -> owned/default room
    resident_roles: dict[str, tuple[str, ...]]
    roles: tuple[str, ...]
    variables: dict[str, VariableDecl]         # canonical name -> decl
    devices: tuple[DeviceDescriptor, ...]
    sensors: tuple[SensorDescriptor, ...]
    registry: KeywordRegistry
    holidays: frozenset[dt.date] = frozenset()
    hemisphere: str = "north"
    coupling: dict[str, float] = field(default_factory=dict)  # quantity -> alpha/min
    noise_sigma: float = 0.0
    default_coupling: float = 0.1

    def find_room(self, name: str) -> str | None:
        for room in self.rooms:
            if room.lower() == name.lower():
                return room
        return None

    def find_resident(self, name: str) -> str | None:
        for res in self.residents:
            if res.lower() == name.lower():
                return res
        return None

    def find_role(self, name: str) -> str | None:
        for role in self.roles:
            if role.lower() == name.lower():
                return role
        return None

    def residents_with_role(self, role: str) -> tuple[str, ...]:
        return tuple(r for r, roles in self.resident_roles.items()
                     if any(x.lower() == role.lower() for x in roles))

    def owned_room(self, resident: str) -> str:
        return self.residents[resident]

    def variable(self, name: str) -> VariableDecl | None:
        key = norm_name(name)
        for decl in self.variables.values():
            if norm_name(decl.name) == key:
                return decl
        return None

    def variable_for_quantity(self, quantity: str, kind: str) -> VariableDecl | None:
        key = norm_quantity(quantity)
        for decl in self.variables.values():
            if decl.kind == kind and norm_quantity(decl.quantity) == key:
                return decl
        return None

    def quantity_coupling(self, quantity: str) -> float:
        for name, alpha in self.coupling.items():
            if norm_quantity(name) == norm_quantity(quantity):
                return alpha
        return self.default_coupling

    def device(self, device_id: str) -> DeviceDescriptor | None:
        for dev in self.devices:
            if dev.id == device_id:
                return dev
        return None

    def devices_serving(self, variable: str, room: str) -> tuple[DeviceDescriptor, ...]:
        key = norm_name(variable)
        hits = [d for d in self.devices
                if d.room == room and norm_name(d.variable) == key]
        return tuple(sorted(hits, key=lambda d: (d.cost, d.id)))

    def sensors_for(self, room: str, quantity: str) -> tuple[SensorDescriptor, ...]:
        key = norm_quantity(quantity)
        return tuple(s for s in self.sensors
                     if s.room == room and norm_quantity(s.quantity) == key)

    def measured_quantities(self) -> tuple[str, ...]:
        seen: dict[str, str] = {}
        for decl in self.variables.values():
            if decl.measured:
                seen.setdefault(norm_quantity(decl.quantity), decl.quantity)
        return tuple(seen.values())


def _want(doc: dict, key: str, typ, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing required key {key!r}", key=key)
    value = doc[key]
    if not isinstance(value, typ):
        raise SchemaError(f"{where}: {key!r} has wrong type", key=key)
    return value


def _variable_decl(entry: dict) -> VariableDecl:
    name = _want(entry, "name", str, "variables[]")
    if not _IDENT_RE.match(name):
        raise SchemaError(f"variable name {name!r} is not a valid identifier", name=name)
    kind = next((k for k in ("VAL", "SET", "KEEP") if name.upper().endswith(k)), None)
    if kind is None:
        raise SchemaError(
            f"variable {name!r} lacks the VAL/SET/KEEP postfix", name=name)
    quantity = entry.get("quantity") or name[: -len(kind)]
    units = entry.get("units", "")
    if "values" in entry:
        domain: DiscreteDomain | ContinuousDomain = DiscreteDomain(
            tuple(str(v) for v in entry["values"]))
    elif "range" in entry:
        lo, hi = entry["range"]
        domain = ContinuousDomain(float(lo), float(hi))
    else:
        raise SchemaError(f"variable {name!r} declares neither values nor range", name=name)
    if kind == "KEEP" and not isinstance(domain, ContinuousDomain):
        raise SchemaError(
            f"KEEP variable {name!r} must have a continuous domain", name=name)
    if kind == "SET" and not isinstance(domain, DiscreteDomain):
        raise SchemaError(
            f"SET variable {name!r} must have a discrete domain", name=name)
    return VariableDecl(name=name, quantity=quantity, kind=kind, units=units, domain=domain)


def load_home_config(document: dict | str | Path) -> HomeConfig:
    """Build a validated HomeConfig from a JSON document (dict, text, or path)."""
    if isinstance(document, Path):
        document = json.loads(document.read_text())
    elif isinstance(document, str):
        document = json.loads(document)
    if not isinstance(document, dict):
        raise SchemaError("home config must be a JSON object")

    rooms = tuple(_want(document, "rooms", list, "config"))
    if not rooms or not all(isinstance(r, str) for r in rooms):
        raise SchemaError("rooms[] must be non-empty strings")

    registry = KeywordRegistry()
    for room in rooms:
        if registry.resolve_in("Location", room) is None:
            registry.register("Location", room, provenance="user-defined")

    residents: dict[str, str] = {}
    resident_roles: dict[str, tuple[str, ...]] = {}
    for entry in _want(document, "residents", list, "config"):
        name = _want(entry, "name", str, "residents[]")
        room = _want(entry, "room", str, "residents[]")
        if room not in rooms:
            raise DanglingReference(
                f"resident {name!r} owns unknown room {room!r}", entity=name, room=room)
        residents[name] = room
        resident_roles[name] = tuple(entry.get("roles", ()))
        if registry.resolve_in("Resident", name) is None:
            registry.register("Resident", name)

    roles = tuple(document.get("roles", ()))
    for role in roles:
        if registry.resolve_in("Role", role) is None:
            registry.register("Role", role)

    variables: dict[str, VariableDecl] = {}
    for entry in _want(document, "variables", list, "config"):
        decl = _variable_decl(entry)
        if decl.name in variables:
            raise SchemaError(f"duplicate variable {decl.name!r}", name=decl.name)
        variables[decl.name] = decl

    def _resolve_var(name: str, where: str) -> VariableDecl:
        key = norm_name(name)
        for decl in variables.values():
            if norm_name(decl.name) == key:
                return decl
        raise DanglingReference(f"{where} references undeclared variable {name!r}",
                                entity=where, variable=name)

    sensors = []
    for entry in document.get("sensors", ()):
        sensor = SensorDescriptor(
            id=_want(entry, "id", str, "sensors[]"),
            room=_want(entry, "room", str, "sensors[]"),
            quantity=_want(entry, "quantity", str, "sensors[]"),
            units=entry.get("units", ""))
        if sensor.room not in rooms:
            raise DanglingReference(
                f"sensor {sensor.id!r} placed in unknown room {sensor.room!r}",
                entity=sensor.id, room=sensor.room)
        sensors.append(sensor)

    devices = []
    for entry in document.get("devices", ()):
        dev = DeviceDescriptor(
            id=_want(entry, "id", str, "devices[]"),
            room=_want(entry, "room", str, "devices[]"),
            variable=_resolve_var(_want(entry, "variable", str, "devices[]"),
                                  entry.get("id", "device")).name,
            mode=_want(entry, "mode", str, "devices[]"),
            effect=float(entry.get("effect", 0.0)),
            adapter=entry.get("adapter", "reqack"),
            cost=float(entry.get("cost", 1.0)))
        if dev.room not in rooms:
            raise DanglingReference(
                f"device {dev.id!r} placed in unknown room {dev.room!r}",
                entity=dev.id, room=dev.room)
        if dev.mode not in ("direct", "internal-loop", "external-loop"):
            raise SchemaError(f"device {dev.id!r} has unknown mode {dev.mode!r}")
        served = _resolve_var(dev.variable, dev.id)
        if dev.mode == "direct" and served.kind != "SET":
            raise SchemaError(
                f"direct-command device {dev.id!r} must serve a SET variable")
        if dev.mode in ("internal-loop", "external-loop") and served.kind != "KEEP":
            raise SchemaError(
                f"loop device {dev.id!r} must serve a KEEP variable")
        if dev.mode == "external-loop":
            same_room = [s for s in sensors
                         if s.room == dev.room
                         and norm_quantity(s.quantity) == norm_quantity(served.quantity)]
            if not same_room:
                raise DanglingReference(
                    f"external-loop device {dev.id!r} has no sensor for "
                    f"{served.quantity!r} in {dev.room!r}", entity=dev.id)
        devices.append(dev)

    for entry in document.get("keywords", ()):
        category = _want(entry, "category", str, "keywords[]")
        name = _want(entry, "name", str, "keywords[]")
        if registry.resolve_in(category if category in CATEGORIES else "", name) is None:
            registry.register(category, name)

    holidays = frozenset(dt.date.fromisoformat(h) for h in document.get("holidays", ()))
    physics = document.get("physics", {})

    return HomeConfig(
        rooms=rooms,
        residents=residents,
        resident_roles=resident_roles,
        roles=roles,
        variables=variables,
        devices=tuple(devices),
        sensors=tuple(sensors),
        registry=registry,
        holidays=holidays,
        hemisphere=document.get("hemisphere", "north"),
        coupling={k: float(v) for k, v in physics.get("coupling", {}).items()},
        noise_sigma=float(physics.get("noise_sigma", 0.0)),
        default_coupling=float(physics.get("default_coupling", 0.1)),
    )
