"""The control-flow channel: rules -> abstract state requests -> device commands.

The interpreter (generic layer) evaluates the active script against one
immutable view of the home per tick and emits at most one surviving request
per (controlled variable, room); runtime clashes resolve by owner priority,
then script order. The concrete manager translates winning requests into
commands for the devices serving each room, idempotently: a request that the
current device set points already satisfy produces no commands.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .devices import DeviceCommand, DeviceFleet, Setpoint, SetpointRange, Switch
from .dsl.ast import (
    Activity, Above, Below, Between, Comparison, ConditionNode, KeepAction,
    Logical, NotifyAction, Presence, RuleAST, Scope, SetAction, Subject, TimeAtom,
)
from .errors import HearthError
from .model import ContinuousDomain, HomeConfig
from .security import (
    AclDenied, KeyPair, SignedRequest, Ticket, TicketInvalid, TrustStore,
    ValueConstraint, VerifyResult, parse_wire_ticket, sign_internal_request,
    verify_internal_request, verify_ticket,
)
from .stateflow import GenericState

DEFAULT_OVERRIDE_HOLD_MINUTES = 60
DEFAULT_ESCALATION_PATIENCE = 10  # ticks out of band before the next device joins


class UnknownVariable(HearthError):
    pass


# -- directives and requests ------------------------------------------------


@dataclass(frozen=True)
class SetDirective:
    value: str


@dataclass(frozen=True)
class KeepDirective:
    lo: float
    hi: float


@dataclass(frozen=True)
class NotifyDirective:
    target: str
    severity: str
    message: str | None = None


Directive = SetDirective | KeepDirective | NotifyDirective


@dataclass(frozen=True)
class StateRequest:
    scope: Scope
    variable: str                 # controlled variable; "" for notifications
    directive: Directive
    provenance: dict

    def canonical_payload(self, tick: int) -> str:
        if isinstance(self.directive, SetDirective):
            directive = {"kind": "set", "value": self.directive.value}
        elif isinstance(self.directive, KeepDirective):
            directive = {"kind": "keep", "lo": self.directive.lo, "hi": self.directive.hi}
        else:
            directive = {"kind": "notify", "target": self.directive.target,
                         "severity": self.directive.severity,
                         "message": self.directive.message}
        return json.dumps({
            "tick": tick,
            "scope": {"kind": self.scope.kind, "name": self.scope.name},
            "variable": self.variable,
            "directive": directive,
            "provenance": dict(sorted(self.provenance.items())),
        }, separators=(",", ":"), sort_keys=True)


def request_from_payload(payload: str) -> tuple[StateRequest, int]:
    """Rebuild a request from its canonical signed payload (the wire format)."""
    doc = json.loads(payload)
    d = doc["directive"]
    if d["kind"] == "set":
        directive: Directive = SetDirective(d["value"])
    elif d["kind"] == "keep":
        directive = KeepDirective(float(d["lo"]), float(d["hi"]))
    else:
        directive = NotifyDirective(d["target"], d["severity"], d.get("message"))
    scope = Scope(doc["scope"]["kind"], doc["scope"].get("name"))
    request = StateRequest(scope=scope, variable=doc["variable"],
                           directive=directive, provenance=dict(doc["provenance"]))
    return request, int(doc["tick"])


def scope_rooms(scope: Scope, config: HomeConfig) -> tuple[str, ...]:
    if scope.kind == "home":
        return config.rooms
    if scope.kind == "room":
        return (scope.name,) if scope.name in config.rooms else ()
    resident = config.find_resident(scope.name or "")
    if resident is None:
        return ()
    return (config.owned_room(resident),)


def keep_band(action: KeepAction, config: HomeConfig) -> tuple[float, float]:
    decl = config.variable(action.variable)
    domain = decl.domain if decl else None
    lo = domain.lo if isinstance(domain, ContinuousDomain) else float("-inf")
    hi = domain.hi if isinstance(domain, ContinuousDomain) else float("inf")
    target = action.target
    if isinstance(target, Between):
        return target.lo, target.hi
    if isinstance(target, Above):
        return target.value, hi
    assert isinstance(target, Below)
    return lo, target.value


# -- condition evaluation -----------------------------------------------------


def _subject_residents(subject: Subject, config: HomeConfig) -> tuple[str, ...]:
    if subject.kind == "resident":
        found = config.find_resident(subject.name or "")
        return (found,) if found else ()
    if subject.kind == "role":
        return config.residents_with_role(subject.name or "")
    return tuple(config.residents)


def _eval3(node: ConditionNode, state: GenericState, config: HomeConfig,
           diagnostics: list[str]) -> bool | None:
    if isinstance(node, Logical):
        if node.op == "NOT":
            inner = _eval3(node.children[0], state, config, diagnostics)
            return None if inner is None else not inner
        results = [_eval3(c, state, config, diagnostics) for c in node.children]
        if node.op == "AND":
            if any(r is False for r in results):
                return False
            return None if any(r is None for r in results) else True
        if any(r is True for r in results):
            return True
        return None if any(r is None for r in results) else False
    if isinstance(node, Presence):
        residents = _subject_residents(node.subject, config)
        if not residents:
            return False
        hits = [state.present_in(r, node.location) for r in residents]
        if node.subject.kind == "all":
            return all(bool(h) for h in hits)
        return any(bool(h) for h in hits)
    if isinstance(node, Activity):
        residents = _subject_residents(node.subject, config)
        if not residents:
            return False
        hits = [(state.activity.get(r) or "").lower() == node.activity.lower()
                for r in residents]
        return all(hits) if node.subject.kind == "all" else any(hits)
    if isinstance(node, TimeAtom):
        keyword = node.clock if node.clock else node.keyword
        truth = state.time.keyword_truth(keyword or "", state.tick_seconds)
        if truth is None:
            diagnostics.append(f"time keyword {keyword!r} has no evaluation semantics")
        return truth
    if isinstance(node, Comparison):
        decl = config.variable(node.variable)
        quantity = decl.quantity if decl else node.variable
        value = state.quantity_value(quantity, node.room)
        if value is None:
            diagnostics.append(
                f"{node.variable} in {node.room or 'Home'} is unknown")
            return None
        if node.op == "ABOVE":
            return value > node.value
        if node.op == "BELOW":
            return value < node.value
        return abs(value - node.value) <= 1e-9
    raise TypeError(f"not a condition node: {node!r}")


def evaluate_condition(node: ConditionNode, state: GenericState, config: HomeConfig,
                       diagnostics: list[str] | None = None) -> bool:
    """Three-valued internally; unknown collapses to False at the root."""
    sink = diagnostics if diagnostics is not None else []
    result = _eval3(node, state, config, sink)
    if result is None:
        sink.append("UnknownOperand: condition collapsed to false")
        return False
    return result


# -- the rule interpreter (generic home manager) ------------------------------


@dataclass(frozen=True)
class ActiveRule:
    rule: RuleAST
    owner: str
    depth: int        # owner priority: 0 is the root authority
    dormant: bool = False


@dataclass
class TickResult:
    requests: list[StateRequest] = field(default_factory=list)
    notifications: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


class Interpreter:
    """Evaluates the active script once per tick against one state snapshot."""

    def __init__(self, config: HomeConfig):
        self.config = config
        self._prev_truth: dict[str, bool] = {}

    def run_tick(self, script: list[ActiveRule], state: GenericState, tick: int
                 ) -> TickResult:
        result = TickResult()
        # (variable, room) -> (depth, order, request)
        winners: dict[tuple[str, str], tuple[int, int, StateRequest]] = {}
        truths: dict[str, bool] = {}
        for order, entry in enumerate(script):
            if entry.dormant:
                continue
            diags: list[str] = []
            fired = evaluate_condition(entry.rule.condition, state, self.config, diags)
            truths[entry.rule.id] = fired
            for diag in diags:
                result.diagnostics.append(f"{entry.rule.id}: {diag}")
            if not fired:
                continue
            rose = not self._prev_truth.get(entry.rule.id, False)
            provenance = {"rule": entry.rule.id, "owner": entry.owner}
            for action in entry.rule.actions:
                if isinstance(action, NotifyAction):
                    if rose:  # notify once per rising edge, not every tick
                        result.notifications.append({
                            "tick": tick, "target": action.target.display(),
                            "severity": action.severity,
                            "message": action.message or "",
                            "rule": entry.rule.id, "owner": entry.owner})
                    continue
                if isinstance(action, SetAction):
                    directive: Directive = SetDirective(action.value)
                else:
                    lo, hi = keep_band(action, self.config)
                    directive = KeepDirective(lo, hi)
                request = StateRequest(scope=action.scope, variable=action.variable,
                                       directive=directive, provenance=provenance)
                for room in scope_rooms(action.scope, self.config):
                    key = (action.variable.lower(), room)
                    claim = (entry.depth, order, request)
                    held = winners.get(key)
                    if held is None or (claim[0], claim[1]) < (held[0], held[1]):
                        if held is not None:
                            result.diagnostics.append(
                                f"{held[2].provenance['rule']}: superseded for "
                                f"{key[0]} in {room} by {entry.rule.id}")
                        winners[key] = claim
                    else:
                        result.diagnostics.append(
                            f"{entry.rule.id}: superseded for {key[0]} in {room} "
                            f"by {held[2].provenance['rule']}")
        self._prev_truth = truths
        # Re-assemble winning requests, preserving scope when it won everywhere.
        emitted: set[int] = set()
        for (variable, room), (_, _, request) in sorted(winners.items()):
            rooms = scope_rooms(request.scope, self.config)
            won_all = all(
                winners.get((variable, r), (None, None, None))[2] is request
                for r in rooms)
            if won_all:
                if id(request) not in emitted:
                    emitted.add(id(request))
                    result.requests.append(request)
            else:
                result.requests.append(StateRequest(
                    scope=Scope.room(room), variable=request.variable,
                    directive=request.directive, provenance=request.provenance))
        return result


# -- notification sink ---------------------------------------------------------


class NotificationSink:
    """Append-only notification log with monotonically increasing sequence ids."""

    def __init__(self, path=None):
        self.path = path
        self.items: list[dict] = []
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("")

    def publish(self, record: dict) -> dict:
        enriched = {"seq": len(self.items) + 1, **record}
        self.items.append(enriched)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(enriched, separators=(",", ":"), sort_keys=True) + "\n")
        return enriched

    def since(self, seq: int) -> list[dict]:
        return [item for item in self.items if item["seq"] > seq]


# -- the concrete home manager -------------------------------------------------


class ConcreteHomeManager:
    """Translates verified state requests into device commands.

    Holds the override pin table and the multi-device escalation counters.
    All inbound requests must be signed: rule-derived ones by the engine key,
    overrides by a claim ticket from the access-control service.
    """

    def __init__(self, config: HomeConfig, fleet: DeviceFleet, trust: TrustStore,
                 tick_seconds: int = 60,
                 patience: int = DEFAULT_ESCALATION_PATIENCE,
                 hold_minutes: int = DEFAULT_OVERRIDE_HOLD_MINUTES,
                 room_value=None):
        self.config = config
        self.fleet = fleet
        self.trust = trust
        self.tick_seconds = tick_seconds
        self.patience = patience
        self.hold_ticks = max(1, int(hold_minutes * 60 / tick_seconds))
        self.pins: dict[tuple[str, str], int] = {}    # (variable, room) -> expiry tick
        self._out_of_band: dict[tuple[str, str], int] = {}
        self.diagnostics: list[str] = []
        # this layer owns the local sensor view; the engine wires it in
        self.room_value = room_value or (lambda room, quantity: None)

    def is_pinned(self, variable: str, room: str, tick: int) -> bool:
        until = self.pins.get((variable.lower(), room))
        return until is not None and tick < until

    def handle_signed(self, signed: SignedRequest, tick: int) -> list[DeviceCommand]:
        """Guard + translate + dispatch for the signed internal channel."""
        verdict = verify_internal_request(signed, self.trust)
        if not verdict.ok:
            self.diagnostics.append(
                f"rejected internal request ({verdict.reason}) from {signed.issuer}")
            return []
        try:
            request, payload_tick = request_from_payload(signed.payload)
        except (KeyError, ValueError, TypeError):
            self.diagnostics.append("rejected internal request (malformed payload)")
            return []
        if payload_tick != tick:
            self.diagnostics.append("rejected internal request (stale tick)")
            return []
        commands = self.translate(request, tick, self.room_value)
        for command in commands:
            self.fleet.dispatch_command(command)
        return commands

    def translate(self, request: StateRequest, tick: int, room_value,
                  ignore_pins: bool = False) -> list[DeviceCommand]:
        """Idempotent translation of one request into zero or more commands."""
        if isinstance(request.directive, NotifyDirective):
            return []
        decl = self.config.variable(request.variable)
        if decl is None:
            raise UnknownVariable(f"{request.variable!r} names no declared state",
                                  variable=request.variable)
        commands: list[DeviceCommand] = []
        issued_at = float(tick * self.tick_seconds)
        for room in scope_rooms(request.scope, self.config):
            if not ignore_pins and self.is_pinned(decl.name, room, tick):
                continue
            serving = self.config.devices_serving(decl.name, room)
            if not serving:
                if request.scope.kind != "home":
                    self.diagnostics.append(
                        f"NoServingDevice: nothing serves {decl.name} in {room}")
                continue
            engaged = 1
            if isinstance(request.directive, KeepDirective):
                value = room_value(room, decl.quantity)
                key = (decl.name.lower(), room)
                inside = (value is not None
                          and request.directive.lo <= value <= request.directive.hi)
                if inside:
                    self._out_of_band[key] = 0
                else:
                    self._out_of_band[key] = self._out_of_band.get(key, 0) + 1
                engaged = min(len(serving),
                              1 + max(0, self._out_of_band.get(key, 0) - 1)
                              // self.patience)
            for device in serving[:engaged]:
                command = self._command_for(device.id, request, issued_at)
                if command is not None:
                    commands.append(command)
        return commands

    def _command_for(self, device_id: str, request: StateRequest,
                     issued_at: float) -> DeviceCommand | None:
        device = self.fleet.devices[device_id]
        directive = request.directive
        if isinstance(directive, SetDirective):
            if device.switch == directive.value:
                return None
            return DeviceCommand(device_id, Switch(directive.value), issued_at)
        assert isinstance(directive, KeepDirective)
        if device.descriptor.mode == "internal-loop":
            setpoint = (directive.lo + directive.hi) / 2.0
            if device.setpoint == setpoint:
                return None
            return DeviceCommand(device_id, Setpoint(setpoint), issued_at)
        band = (directive.lo, directive.hi)
        if device.band == band:
            return None
        return DeviceCommand(device_id, SetpointRange(*band), issued_at)

    # -- manual override path ------------------------------------------------

    def apply_override(self, state_name: str, directive: Directive, scope: Scope,
                       ticket_wire: str, tick: int, now: float,
                       replay=None) -> tuple[StateRequest, list[DeviceCommand]]:
        """One-off state change: verify the claim ticket, pin, translate."""
        try:
            ticket = parse_wire_ticket(ticket_wire)
        except HearthError as exc:
            raise TicketInvalid(f"override ticket rejected: {exc}") from exc
        if self.config.device(state_name) is not None:
            raise UnknownVariable(
                f"{state_name!r} is a device, not a state; name the desired state",
                variable=state_name)
        if isinstance(directive, KeepDirective):
            decl = self.config.variable_for_quantity(state_name, "KEEP") \
                or self.config.variable(state_name)
            value: float | str | tuple[float, float] = (directive.lo, directive.hi)
        elif isinstance(directive, SetDirective):
            decl = self.config.variable_for_quantity(state_name, "SET") \
                or self.config.variable(state_name)
            value = directive.value
        else:
            raise UnknownVariable("overrides set or keep states; they do not notify")
        if decl is None or not decl.controlled:
            raise UnknownVariable(f"{state_name!r} names no controlled state",
                                  variable=state_name)
        want = {"state": decl.quantity, "action": "set", "value": value}
        verdict = verify_ticket(ticket, self.trust, now, expected_claim=want,
                                replay=replay, consume=True)
        if not verdict.ok:
            if verdict.reason == "ClaimMismatch":
                constraint = next(
                    (c.get("constraint") for c in ticket.claims
                     if c.get("state", "").lower() == decl.quantity.lower()), None)
                if constraint is not None \
                        and not ValueConstraint.parse(constraint).allows(value):
                    raise AclDenied(
                        f"value outside the granted constraint ({constraint})",
                        constraint=constraint)
                raise AclDenied("ticket claims do not cover this request")
            raise TicketInvalid(f"override ticket rejected: {verdict.reason}")
        request = StateRequest(scope=scope, variable=decl.name, directive=directive,
                               provenance={"override": ticket.subject,
                                           "nonce": ticket.nonce})
        commands = self.translate(request, tick, self.room_value, ignore_pins=True)
        for command in commands:
            self.fleet.dispatch_command(command)
        for room in scope_rooms(scope, self.config):
            self.pins[(decl.name.lower(), room)] = tick + self.hold_ticks
        return request, commands
