"""Virtual actuators, simple first-order room physics, and protocol adapters.

Three management configurations are modeled: direct-command devices hold a
discrete switch state; internal-loop devices hold a set point and regulate
themselves; external-loop devices hold a band and are driven by a loop built
around the device from a room sensor. Adapters stand in for vendor protocols
behind one encode/decode interface.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .errors import HearthError
from .model import ContinuousDomain, DeviceDescriptor, HomeConfig, norm_quantity
from .stateflow import SensorReading


class UnknownDevice(HearthError):
    pass


class PayloadMismatch(HearthError):
    pass


class AdapterError(HearthError):
    pass


@dataclass(frozen=True)
class Switch:
    state: str  # ON | OFF | OPEN | CLOSE (or any declared discrete value)


@dataclass(frozen=True)
class Setpoint:
    value: float


@dataclass(frozen=True)
class SetpointRange:
    lo: float
    hi: float


Payload = Switch | Setpoint | SetpointRange


@dataclass(frozen=True)
class DeviceCommand:
    device_id: str
    payload: Payload
    issued_at: float


@dataclass(frozen=True)
class Ack:
    seq: int
    ok: bool
    state: str


class VirtualDevice:
    """Runtime state of one simulated actuator."""

    def __init__(self, descriptor: DeviceDescriptor):
        self.descriptor = descriptor
        self.switch: str | None = "OFF" if descriptor.mode == "direct" else None
        self.setpoint: float | None = None
        self.band: tuple[float, float] | None = None
        self.output: float = 0.0

    @property
    def engaged(self) -> bool:
        if self.descriptor.mode == "direct":
            return self.switch in ("ON", "OPEN")
        return self.setpoint is not None or self.band is not None

    def state_label(self) -> str:
        if self.descriptor.mode == "direct":
            return (self.switch or "OFF").lower()
        return "on" if self.engaged else "off"

    def apply(self, payload: Payload) -> None:
        mode = self.descriptor.mode
        if isinstance(payload, Switch):
            if mode != "direct":
                raise PayloadMismatch(
                    f"{self.descriptor.id} is a loop device; it takes set points",
                    device=self.descriptor.id)
            self.switch = payload.state
            self.output = 1.0 if payload.state in ("ON", "OPEN") else 0.0
            return
        if isinstance(payload, Setpoint):
            if mode == "direct":
                raise PayloadMismatch(
                    f"{self.descriptor.id} takes direct switch commands only",
                    device=self.descriptor.id)
            self.setpoint = payload.value
            self.band = None
            return
        if isinstance(payload, SetpointRange):
            if mode != "external-loop":
                raise PayloadMismatch(
                    f"{self.descriptor.id} cannot hold a band", device=self.descriptor.id)
            lo, hi = sorted((payload.lo, payload.hi))
            self.band = (lo, hi)
            self.setpoint = None
            return
        raise PayloadMismatch(f"unsupported payload {payload!r}")

    def release(self) -> None:
        self.setpoint = None
        self.band = None
        self.output = 0.0
        if self.descriptor.mode == "direct":
            self.switch = "OFF"

    def loop_step(self, value: float | None) -> float:
        """Advance the device's own control decision for this tick."""
        mode = self.descriptor.mode
        if mode == "direct":
            return self.output
        if value is None:
            return self.output
        heating = self.descriptor.effect >= 0
        if mode == "internal-loop":
            if self.setpoint is None:
                self.output = 0.0
            elif heating:
                self.output = 1.0 if value < self.setpoint else 0.0
            else:
                self.output = 1.0 if value > self.setpoint else 0.0
            return self.output
        # external loop: bang-bang with the band itself as hysteresis
        band = self.band
        if band is None and self.setpoint is not None:
            band = (self.setpoint, self.setpoint)
        if band is None:
            self.output = 0.0  # no band set: idle
            return self.output
        lo, hi = band
        if heating:
            if value < lo:
                self.output = 1.0
            elif value > hi:
                self.output = 0.0
        else:
            if value > hi:
                self.output = 1.0
            elif value < lo:
                self.output = 0.0
        return self.output


def external_loop_step(device: VirtualDevice, value: float | None) -> float:
    """Bang-bang step for an external-loop device given the latest sensor value."""
    if device.descriptor.mode != "external-loop":
        raise PayloadMismatch(f"{device.descriptor.id} has no external loop")
    return device.loop_step(value)


# -- protocol adapters ----------------------------------------------------


class ProtocolAdapter:
    """encode(command) -> wire message; decode(wire) -> command."""

    id: str

    def encode(self, command: DeviceCommand, seq: int) -> str:
        raise NotImplementedError

    def decode(self, wire: str) -> tuple[DeviceCommand, int]:
        raise NotImplementedError


def _payload_fields(payload: Payload) -> tuple[str, object]:
    if isinstance(payload, Switch):
        return "switch", payload.state
    if isinstance(payload, Setpoint):
        return "setpoint", payload.value
    return "band", [payload.lo, payload.hi]


def _payload_from(op: str, value) -> Payload:
    if op == "switch":
        return Switch(str(value))
    if op == "setpoint":
        return Setpoint(float(value))
    if op == "band":
        lo, hi = value
        return SetpointRange(float(lo), float(hi))
    raise AdapterError(f"unknown wire op {op!r}")


class RequestAckAdapter(ProtocolAdapter):
    """HTTP-style request/acknowledge wire shape."""

    id = "reqack"

    def encode(self, command: DeviceCommand, seq: int) -> str:
        op, value = _payload_fields(command.payload)
        return json.dumps({"device": command.device_id, "op": op, "value": value,
                           "seq": seq, "t": command.issued_at},
                          separators=(",", ":"), sort_keys=True)

    def decode(self, wire: str) -> tuple[DeviceCommand, int]:
        try:
            doc = json.loads(wire)
            payload = _payload_from(doc["op"], doc["value"])
            return DeviceCommand(doc["device"], payload, float(doc["t"])), int(doc["seq"])
        except (KeyError, ValueError, TypeError) as exc:
            raise AdapterError(f"bad request/ack message: {exc}") from exc


class PubSubAdapter(ProtocolAdapter):
    """Topic-based publish/subscribe wire shape (one message per command)."""

    id = "pubsub"

    def __init__(self, room_of: dict[str, str] | None = None):
        self.room_of = room_of or {}

    def encode(self, command: DeviceCommand, seq: int) -> str:
        op, value = _payload_fields(command.payload)
        room = self.room_of.get(command.device_id, "home")
        topic = f"home/{room}/{command.device_id}/set"
        return json.dumps({"topic": topic, "payload": {"op": op, "value": value,
                                                       "seq": seq, "t": command.issued_at}},
                          separators=(",", ":"), sort_keys=True)

    def decode(self, wire: str) -> tuple[DeviceCommand, int]:
        try:
            doc = json.loads(wire)
            device_id = doc["topic"].split("/")[2]
            body = doc["payload"]
            payload = _payload_from(body["op"], body["value"])
            return DeviceCommand(device_id, payload, float(body["t"])), int(body["seq"])
        except (KeyError, IndexError, ValueError, TypeError) as exc:
            raise AdapterError(f"bad pub/sub message: {exc}") from exc


class DeviceFleet:
    """All virtual devices plus the adapter registry and command dispatch."""

    def __init__(self, config: HomeConfig):
        self.config = config
        self.devices: dict[str, VirtualDevice] = {}
        for d in config.devices:
            device = VirtualDevice(d)
            if d.mode == "direct":
                decl = config.variables[d.variable]
                values = decl.domain.values  # type: ignore[union-attr]
                device.switch = "OFF" if "OFF" in values else values[-1]
            self.devices[d.id] = device
        room_of = {d.id: d.room for d in config.devices}
        self.adapters: dict[str, ProtocolAdapter] = {
            "reqack": RequestAckAdapter(),
            "pubsub": PubSubAdapter(room_of),
        }
        self._seq = 0
        self.wire_log: list[str] = []

    def dispatch_command(self, command: DeviceCommand) -> Ack:
        device = self.devices.get(command.device_id)
        if device is None:
            raise UnknownDevice(f"no device {command.device_id!r}",
                                device=command.device_id)
        adapter = self.adapters.get(device.descriptor.adapter)
        if adapter is None:
            raise AdapterError(f"no adapter {device.descriptor.adapter!r}")
        self._seq += 1
        wire = adapter.encode(command, self._seq)
        decoded, seq = adapter.decode(wire)
        if decoded != command:
            raise AdapterError("adapter round-trip mismatch", device=command.device_id)
        self.wire_log.append(wire)
        device.apply(decoded.payload)
        return Ack(seq=seq, ok=True, state=device.state_label())

    def states(self) -> dict[str, str]:
        return {device_id: dev.state_label() for device_id, dev in self.devices.items()}


class RoomPhysics:
    """First-order dynamics per (room, continuous quantity).

    value += alpha * (ambient - value) * dt + sum(effect_i * output_i) * dt,
    clamped to the measured variable's declared domain.
    """

    def __init__(self, config: HomeConfig, seed: int = 0):
        self.config = config
        self.rng = random.Random(seed)
        self.values: dict[tuple[str, str], float] = {}
        self.ambient: dict[str, float] = {}
        self._domains: dict[str, tuple[float, float]] = {}
        for decl in config.variables.values():
            if decl.measured and isinstance(decl.domain, ContinuousDomain):
                self._domains[norm_quantity(decl.quantity)] = (decl.domain.lo, decl.domain.hi)
        for room in config.rooms:
            for quantity in config.measured_quantities():
                key = norm_quantity(quantity)
                if key in self._domains:
                    self.values[(room, quantity)] = 0.0
                    self.ambient.setdefault(quantity, 0.0)

    def set_ambient(self, quantity: str, value: float, room: str | None = None) -> None:
        """Scenario hook; with room given, also pins the room's current value."""
        matched = next((q for q in self.ambient
                        if norm_quantity(q) == norm_quantity(quantity)), quantity)
        self.ambient[matched] = value
        if room is not None:
            for (r, q) in self.values:
                if r == room and norm_quantity(q) == norm_quantity(quantity):
                    self.values[(r, q)] = value

    def initialize_to_ambient(self) -> None:
        for (room, quantity) in self.values:
            self.values[(room, quantity)] = self.ambient.get(quantity, 0.0)

    def set_value(self, quantity: str, value: float, room: str | None = None) -> None:
        for (r, q) in self.values:
            if norm_quantity(q) == norm_quantity(quantity) and room in (None, r):
                self.values[(r, q)] = value

    def step(self, fleet: DeviceFleet, dt_seconds: float) -> None:
        """Advance every room quantity by dt under ambient pull + device effects."""
        if dt_seconds <= 0:
            raise ValueError("dt must be positive")
        dt_min = dt_seconds / 60.0
        for (room, quantity), value in list(self.values.items()):
            alpha = self.config.quantity_coupling(quantity)
            ambient = self.ambient.get(quantity, 0.0)
            drift = alpha * (ambient - value) * dt_min
            push = 0.0
            for device in fleet.devices.values():
                d = device.descriptor
                served = self.config.variables[d.variable]
                if d.room == room and norm_quantity(served.quantity) == norm_quantity(quantity):
                    push += d.effect * device.output * dt_min
            new = value + drift + push
            lo, hi = self._domains[norm_quantity(quantity)]
            self.values[(room, quantity)] = min(hi, max(lo, new))

    def read_sensors(self, clock: float, noise_sigma: float | None = None
                     ) -> list[SensorReading]:
        """Emit one reading per configured sensor at the given clock."""
        sigma = self.config.noise_sigma if noise_sigma is None else noise_sigma
        readings = []
        for sensor in self.config.sensors:
            key = (sensor.room, next(
                (q for q in self.config.measured_quantities()
                 if norm_quantity(q) == norm_quantity(sensor.quantity)), sensor.quantity))
            if key not in self.values:
                continue
            value = self.values[key]
            if sigma > 0:
                value += self.rng.gauss(0.0, sigma)
            readings.append(SensorReading(sensor.id, value, sensor.units, clock))
        return readings

    def value(self, room: str, quantity: str) -> float | None:
        for (r, q), v in self.values.items():
            if r == room and norm_quantity(q) == norm_quantity(quantity):
                return v
        return None
