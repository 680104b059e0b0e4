"""The engine: one sequential tick loop binding every subsystem together.

Tick order (the boundary between ticks is the quiescent point):
  1. apply any scheduled script swap;
  2. apply this tick's scenario events (ambient, presence, overrides, ...);
  3. read sensors and build the concrete and generic state views;
  4. interpret the active script, sign surviving requests with the engine key;
  5. the concrete manager verifies and translates them; commands dispatch
     through protocol adapters to the virtual devices;
  6. device loops decide their outputs and the physics advances one step;
  7. a discretized snapshot appends to the event repository.

Identical seed, config, script, and scenario reproduce the run byte for byte:
the only randomness is the seeded sensor-noise generator, and ticket nonces
are per-issuer counters.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

from .admin import PolicyBundle, RuleScriptManager
from .controlflow import (
    AclDenied, ConcreteHomeManager, Interpreter, KeepDirective, NotifyDirective,
    NotificationSink, SetDirective, StateRequest, TicketInvalid, UnknownVariable,
    scope_rooms,
)
from .devices import DeviceCommand, DeviceFleet, RoomPhysics, Setpoint, Switch
from .dsl.ast import Scope
from .dsl.parser import parse_script
from .errors import HearthError
from .learning import RuleMiner
from .model import HomeConfig
from .scenario import Scenario, ScenarioEvent
from .security import (
    AccessControlService, AuditLog, AuthenticationService, Ed25519Signer,
    HmacSigner, KeyPair, ReplayCache, TrustStore, sign_internal_request,
)
from .stateflow import (
    Discretizer, Repository, SensorStateManager, build_concrete_state,
    build_generic_state, snapshot_event,
)


@dataclass
class TickTrace:
    tick: int
    requests: list[dict] = field(default_factory=list)
    commands: list[dict] = field(default_factory=list)
    notifications: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


@dataclass
class RunReport:
    ticks: int
    request_count: int
    command_count: int
    final_device_states: dict[str, str]
    notifications: list[dict]
    trace: list[TickTrace]
    diagnostics: list[str]
    repository_path: str | None = None

    def to_json(self) -> dict:
        return {
            "ticks": self.ticks,
            "requests": self.request_count,
            "commands": self.command_count,
            "devices": self.final_device_states,
            "notifications": self.notifications,
            "diagnostics": self.diagnostics,
            "repository": self.repository_path,
        }


def _make_keypair(principal: str, deterministic: bool) -> KeyPair:
    if deterministic:
        return KeyPair(principal, HmacSigner(f"test-key-{principal}".encode()))
    return KeyPair(principal, Ed25519Signer())


class LocalSeam:
    """In-process generic-to-concrete channel; requests still verify signatures."""

    def __init__(self, manager: ConcreteHomeManager):
        self.manager = manager

    def send(self, signed, tick: int) -> list[dict]:
        return [_command_trace(c) for c in self.manager.handle_signed(signed, tick)]


class Engine:
    """Owns the home's runtime state and advances it one tick at a time."""

    def __init__(self, config: HomeConfig, bundle: PolicyBundle,
                 script_text: str = "", scenario: Scenario | None = None,
                 out_dir: Path | None = None, deterministic_keys: bool = False):
        self.config = config
        self.bundle = bundle
        self.scenario = scenario or Scenario()
        self.tick_seconds = self.scenario.tick_seconds
        self.out_dir = out_dir
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)

        def path(name: str) -> Path | None:
            return out_dir / name if out_dir is not None else None

        self.audit = AuditLog(path("audit.ndjson"))
        self.notifications = NotificationSink(path("notifications.ndjson"))
        self.repository = Repository(path("repository.ndjson"))
        self._override_log = path("overrides.ndjson")
        if self._override_log is not None:
            self._override_log.write_text("")

        # key material and trust relationships
        self.as_key = _make_keypair("auth-service", deterministic_keys)
        self.acs_key = _make_keypair("access-control-service", deterministic_keys)
        self.engine_key = _make_keypair("generic-home-manager", deterministic_keys)
        as_trust = TrustStore()
        as_trust.add(self.as_key)
        self.concrete_trust = TrustStore()
        self.concrete_trust.add(self.engine_key)
        self.concrete_trust.add(self.acs_key)
        self.client_trust = TrustStore()
        self.client_trust.add(self.as_key)
        self.client_trust.add(self.acs_key)

        self.auth = AuthenticationService(bundle.users, self.as_key, self.audit)
        self.acs = AccessControlService(bundle.acl, bundle.users, self.acs_key,
                                        as_trust, self.audit)
        self.replay = ReplayCache()

        # layers
        self.fleet = DeviceFleet(config)
        self.physics = RoomPhysics(config, seed=self.scenario.seed)
        self.sensors = SensorStateManager(config)
        self.discretizer = Discretizer(config)
        self.interpreter = Interpreter(config)
        self.concrete = ConcreteHomeManager(config, self.fleet, self.concrete_trust,
                                            tick_seconds=self.tick_seconds,
                                            room_value=self._room_value)
        self.seam = LocalSeam(self.concrete)
        self.script_mgr = RuleScriptManager(bundle, config, as_trust, self.audit,
                                            log_path=path("proposals.ndjson"))
        if script_text:
            rules = parse_script(script_text, config.registry, config,
                                 owner=bundle.tree.root)
            self.script_mgr.install_script(rules)

        self.miner: RuleMiner | None = None
        self._miner_cursor = 0

        self.presence: dict[str, str | None] = {r: None for r in config.residents}
        self.activity: dict[str, str | None] = {r: None for r in config.residents}
        self.meters: dict[str, float] = {"energy": 0.0}
        self.tick_index = 0
        self.trace: list[TickTrace] = []
        self.diagnostics: list[str] = []
        self.last_swap_tick: int | None = None
        self.latest_generic = None
        self.latest_concrete = None
        self._physics_initialized = False

    # -- time -----------------------------------------------------------------

    def now_seconds(self) -> float:
        return float(self.tick_index * self.tick_seconds)

    def moment(self) -> dt.datetime:
        return self.scenario.start + dt.timedelta(seconds=self.now_seconds())

    # -- scenario events ---------------------------------------------------------

    def _apply_event(self, event: ScenarioEvent, trace: TickTrace) -> None:
        p = event.payload
        now = self.now_seconds()
        if event.kind == "ambient":
            self.physics.set_ambient(p["quantity"], float(p["value"]),
                                     room=p.get("room"))
            if event.at_tick == 0 or p.get("initialize"):
                self.physics.set_value(p["quantity"], float(p["value"]),
                                       room=p.get("room"))
            return
        if event.kind == "presence":
            self.presence[self.config.find_resident(p["resident"]) or p["resident"]] = \
                p.get("location")
            return
        if event.kind == "activity":
            self.activity[self.config.find_resident(p["resident"]) or p["resident"]] = \
                p.get("activity")
            return
        if event.kind == "device":
            value = p["value"]
            payload = Switch(str(value).upper()) if isinstance(value, str) \
                else Setpoint(float(value))
            command = DeviceCommand(p["device"], payload, now)
            self.fleet.dispatch_command(command)
            trace.commands.append({"device": p["device"], "manual": True,
                                   "value": value})
            return
        if event.kind == "override":
            self._apply_override_event(p, trace)
            return
        if event.kind == "proposal":
            user = p.get("user", p["owner"])
            ticket = None
            if p.get("secret") is not None:
                ticket = self.auth.authenticate(user, p["secret"], now).to_wire()
            proposal = self.script_mgr.propose_rule(
                p["rule"], p["owner"], ticket, now, tick=self.tick_index)
            trace.diagnostics.append(
                f"proposal {proposal.id}: {proposal.status}"
                + (f" ({proposal.reason})" if proposal.reason else ""))
            return
        if event.kind == "recommendation_verdict":
            self._apply_verdict_event(p, trace)
            return

    def _apply_override_event(self, p: dict, trace: TickTrace) -> None:
        now = self.now_seconds()
        directive_doc = p.get("directive", {})
        if directive_doc.get("kind") == "set":
            directive: SetDirective | KeepDirective = SetDirective(
                str(directive_doc["value"]))
            value = None
        else:
            lo = float(directive_doc.get("lo", directive_doc.get("value", 0)))
            hi = float(directive_doc.get("hi", directive_doc.get("value", lo)))
            directive = KeepDirective(min(lo, hi), max(lo, hi))
            value = None
        scope = Scope.room(self.config.find_room(p["room"])) if p.get("room") \
            else Scope.home()
        try:
            as_ticket = self.auth.authenticate(p["user"], p["secret"], now)
            acs_ticket = self.acs.authorize(as_ticket, p["state"], "set", value, now)
            request, commands = self.concrete.apply_override(
                p["state"], directive, scope, acs_ticket.to_wire(),
                self.tick_index, now, replay=self.replay)
            for command in commands:
                trace.commands.append(_command_trace(command, override=True))
            self._record_override(request, accepted=True)
            trace.diagnostics.append(f"override accepted for {p['state']}")
        except (AclDenied, TicketInvalid, UnknownVariable, HearthError) as exc:
            reason = type(exc).__name__
            self.audit.append(service="concrete-guard", op="override",
                              subject=p.get("user"), outcome="deny",
                              reason=reason, detail=str(exc), at=now)
            trace.diagnostics.append(f"override denied: {reason}: {exc}")

    def _record_override(self, request: StateRequest, accepted: bool) -> None:
        record = {"tick": self.tick_index, "request": request.canonical_payload(
            self.tick_index), "accepted": accepted}
        if self._override_log is not None:
            with self._override_log.open("a") as fh:
                fh.write(json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n")

    def _apply_verdict_event(self, p: dict, trace: TickTrace) -> None:
        miner = self.ensure_miner()
        needle = p.get("rule_contains", "")
        target = next((rec for rec in miner.items.values()
                       if needle and needle.lower() in rec.rule_text.lower()), None)
        if target is None:
            trace.diagnostics.append(f"no recommendation matching {needle!r}")
            return
        if p.get("verdict") == "reject":
            updated = miner.reject(target.id)
            trace.diagnostics.append(
                f"recommendation {updated.id} rejected; threshold {updated.threshold:.3f}")
        else:
            miner.promote(target.id)
            self.script_mgr.propose_rule(target.rule_text, "learning-process",
                                         None, self.now_seconds(), tick=self.tick_index)
            trace.diagnostics.append(f"recommendation {target.id} promoted")

    # -- learning ------------------------------------------------------------------

    def ensure_miner(self) -> RuleMiner:
        if self.miner is None:
            self.miner = RuleMiner(self.config, discretizer=self.discretizer)
        fresh = self.repository.records[self._miner_cursor:]
        if fresh:
            self.miner.ingest(fresh)
            self._miner_cursor = len(self.repository.records)
        if self._miner_cursor:
            self.miner.recommend()
        return self.miner

    # -- the tick --------------------------------------------------------------------

    def _room_value(self, room: str, quantity: str) -> float | None:
        if self.latest_concrete is not None:
            value = self.latest_concrete.value(room, quantity)
            if value is not None:
                return value
        return self.physics.value(room, quantity)

    def tick(self) -> TickTrace:
        trace = TickTrace(tick=self.tick_index)
        receipt = self.script_mgr.apply_pending_swap(self.tick_index)
        if receipt is not None:
            self.last_swap_tick = receipt.activated_at_tick
            trace.diagnostics.append(
                f"script swap activated (hash {receipt.script_hash})")
        if not self._physics_initialized:
            self.physics.initialize_to_ambient()
            self._physics_initialized = True
            for event in self.scenario.events_at(0):
                if event.kind == "ambient":
                    self._apply_event(event, trace)
        for event in self.scenario.events_at(self.tick_index):
            if self.tick_index == 0 and event.kind == "ambient":
                continue  # already applied during initialization
            self._apply_event(event, trace)

        now = self.now_seconds()
        for reading in self.physics.read_sensors(now):
            self.sensors.ingest_reading(reading)
        concrete = build_concrete_state(self.sensors, self.config, now, self.meters)
        self.latest_concrete = concrete
        state_diags: list[str] = []
        generic = build_generic_state(concrete, self.presence, self.activity,
                                      self.moment(), self.config,
                                      self.tick_seconds, state_diags)
        self.latest_generic = generic
        trace.diagnostics.extend(state_diags)

        result = self.interpreter.run_tick(self.script_mgr.active_rules(),
                                           generic, self.tick_index)
        trace.diagnostics.extend(result.diagnostics)
        for notification in result.notifications:
            trace.notifications.append(self.notifications.publish(notification))

        for request in result.requests:
            if isinstance(request.directive, NotifyDirective):
                continue
            rooms = scope_rooms(request.scope, self.config)
            if rooms and all(self.is_pinned(request.variable, room) for room in rooms):
                trace.diagnostics.append(
                    f"{request.provenance.get('rule')}: suppressed by override pin")
                continue
            trace.requests.append(json.loads(request.canonical_payload(self.tick_index)))
            signed = sign_internal_request(
                request.canonical_payload(self.tick_index), self.engine_key)
            trace.commands.extend(self.seam.send(signed, self.tick_index))
        trace.diagnostics.extend(self.concrete.diagnostics)
        self.concrete.diagnostics = []

        # expire override pins
        for key, until in list(self.concrete.pins.items()):
            if self.tick_index >= until:
                del self.concrete.pins[key]

        # tertiary loops act, then the world moves
        for device in self.fleet.devices.values():
            served = self.config.variables[device.descriptor.variable]
            device.loop_step(self.physics.value(device.descriptor.room,
                                                served.quantity))
        self.meters["energy"] += sum(d.output for d in self.fleet.devices.values()) \
            * (self.tick_seconds / 60.0)

        snapshot = snapshot_event(generic, concrete, self.fleet.states(),
                                  self.discretizer, self.config,
                                  timestamp=now)
        self.repository.append(snapshot)

        self.physics.step(self.fleet, self.tick_seconds)
        self.trace.append(trace)
        self.tick_index += 1
        return trace

    def is_pinned(self, variable: str, room: str) -> bool:
        return self.concrete.is_pinned(variable, room, self.tick_index)

    def run(self, ticks: int | None = None) -> RunReport:
        total = ticks if ticks is not None else self.scenario.duration_ticks
        for _ in range(total):
            self.tick()
        return self.report()

    def report(self) -> RunReport:
        return RunReport(
            ticks=self.tick_index,
            request_count=sum(len(t.requests) for t in self.trace),
            command_count=sum(len(t.commands) for t in self.trace),
            final_device_states=self.fleet.states(),
            notifications=list(self.notifications.items),
            trace=self.trace,
            diagnostics=[d for t in self.trace for d in t.diagnostics],
            repository_path=str(self.repository.path) if self.repository.path else None,
        )

    def status(self) -> dict:
        return {
            "tick": self.tick_index,
            "script_hash": self.script_mgr.script_hash(),
            "pending_proposals": len(self.script_mgr.pending()),
            "devices": self.fleet.states(),
            "last_swap_tick": self.last_swap_tick,
        }


def _command_trace(command: DeviceCommand, override: bool = False) -> dict:
    doc: dict = {"device": command.device_id, "at": command.issued_at}
    payload = command.payload
    if isinstance(payload, Switch):
        doc["switch"] = payload.state
    elif isinstance(payload, Setpoint):
        doc["setpoint"] = payload.value
    else:
        doc["band"] = [payload.lo, payload.hi]
    if override:
        doc["override"] = True
    return doc


def run_scenario(config: HomeConfig, script_text: str, bundle: PolicyBundle,
                 scenario: Scenario, out_dir: Path | None = None,
                 deterministic_keys: bool = True) -> RunReport:
    """Run a scenario to completion; identical inputs give identical outputs."""
    engine = Engine(config, bundle, script_text=script_text, scenario=scenario,
                    out_dir=out_dir, deterministic_keys=deterministic_keys)
    return engine.run()
