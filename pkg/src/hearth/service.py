"""The HTTP gateway: every externally visible operation in one API surface.

All mutation paths funnel through one lock shared with the tick loop, so
overrides, proposals, and swaps land only between ticks. Write paths never
accept device ids; reads may expose device state for the dashboard. The
split-mode seam serves the concrete half's signed-request endpoint so the
generic half can live in another process.
"""

from __future__ import annotations

import base64
import threading
import time
from pathlib import Path

import httpx
from fastapi import FastAPI, Header, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .engine import Engine, _command_trace
from .errors import HearthError
from .security import (
    AclDenied, BadCredentials, SignedRequest, TicketInvalid, ValueDenied,
    parse_wire_ticket, verify_ticket,
)
from .controlflow import KeepDirective, SetDirective
from .admin import PermissionDenied, UnknownProposal
from .dsl.ast import Scope
from .learning import UnknownRecommendation

_DENIALS = (AclDenied, ValueDenied, PermissionDenied)
_UNAUTH = (BadCredentials, TicketInvalid)


def _error(exc: Exception, status: int | None = None) -> JSONResponse:
    if status is None:
        if isinstance(exc, _UNAUTH):
            status = 401
        elif isinstance(exc, _DENIALS):
            status = 403
        else:
            status = 400
    code = type(exc).__name__
    detail = str(exc)
    context = getattr(exc, "context", {}) or {}
    body = {"error": {"code": code, "detail": detail, **{
        k: v for k, v in context.items() if isinstance(v, (str, int, float))}}}
    return JSONResponse(status_code=status, content=body)


def _proposal_json(p) -> dict:
    return {"id": p.id, "rule": p.rule_text, "owner": p.owner, "status": p.status,
            "reason": p.reason, "escalated_to": p.escalated_to,
            "conflicts": [{"with": c.rule_b, "variable": c.variable,
                           "rooms": list(c.rooms), "reason": c.reason,
                           "witness": c.witness} for c in p.conflicts]}


class Gateway:
    """Engine plus the lock that serializes ticks and mutations."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.lock = threading.RLock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- the tick loop -------------------------------------------------------

    def start_ticking(self, real_seconds_per_tick: float = 1.0,
                      max_ticks: int | None = None) -> None:
        def loop():
            done = 0
            while not self._stop.is_set():
                time.sleep(real_seconds_per_tick)
                with self.lock:
                    self.engine.tick()
                done += 1
                if max_ticks is not None and done >= max_ticks:
                    break

        self._thread = threading.Thread(target=loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    # -- helpers ---------------------------------------------------------------

    def _identity(self, wire: str | None):
        if not wire:
            raise TicketInvalid("an identity ticket is required")
        verdict = verify_ticket(wire, self.engine.client_trust,
                                self.engine.now_seconds())
        if not verdict.ok:
            raise TicketInvalid(f"ticket rejected: {verdict.reason}")
        ticket = parse_wire_ticket(wire)
        account = self.engine.bundle.users.get(ticket.subject)
        return ticket, account

    def state_view(self, wire: str | None) -> dict:
        with self.lock:
            engine = self.engine
            _, account = self._identity(wire)
            role = account.role if account else None
            subject = account.owner_id if account else ""
            rooms: dict[str, dict] = {}
            generic = engine.latest_generic
            concrete = engine.latest_concrete
            if concrete is not None:
                for room, per in concrete.rooms.items():
                    visible = {}
                    for quantity, qs in per.items():
                        entry = engine.bundle.acl.match(subject, role, quantity, "read")
                        if entry is None or not entry.constraint.grants_anything():
                            continue
                        visible[quantity] = qs.value if qs.known else None
                    rooms[room] = visible
            view = {
                "tick": engine.tick_index,
                "seq": engine.tick_index,
                "presence": dict(generic.presence) if generic else {},
                "activity": dict(generic.activity) if generic else {},
                "time": {
                    "clock": generic.time.clock if generic else None,
                    "period": generic.time.period if generic else None,
                    "dayType": generic.time.day_type if generic else None,
                    "season": generic.time.season if generic else None,
                },
                "rooms": rooms,
                "status": engine.status(),
            }
            return view


def build_app(gateway: Gateway, static_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="hearth gateway", docs_url=None, redoc_url=None)
    # the console may be served from any static host
    from fastapi.middleware.cors import CORSMiddleware
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    engine = gateway.engine

    @app.exception_handler(HearthError)
    async def _handle(request: Request, exc: HearthError):
        return _error(exc)

    @app.post("/auth/login")
    def login(body: dict):
        with gateway.lock:
            now = engine.now_seconds()
            ticket = engine.auth.authenticate(body.get("user", ""),
                                              body.get("secret", ""), now)
            account = engine.bundle.users.get(ticket.subject)
            grants = engine.bundle.acl.grants_for(
                account.owner_id if account else ticket.subject,
                account.role if account else None)
            return {"ticket": ticket.to_wire(), "subject": ticket.subject,
                    "role": account.role if account else None,
                    "owner_id": account.owner_id if account else ticket.subject,
                    "grants": grants, "expires": ticket.expiry}

    @app.post("/authorize")
    def authorize(body: dict):
        with gateway.lock:
            now = engine.now_seconds()
            value = body.get("value")
            if isinstance(value, list):
                value = (float(value[0]), float(value[1]))
            ticket = engine.acs.authorize(body.get("ticket", ""),
                                          body.get("state", ""),
                                          body.get("action", "set"), value, now)
            return {"ticket": ticket.to_wire(),
                    "claims": [dict(c) for c in ticket.claims]}

    @app.post("/override")
    def override(body: dict):
        with gateway.lock:
            doc = body.get("directive", {})
            if doc.get("kind") == "set":
                directive = SetDirective(str(doc.get("value")))
            else:
                lo = float(doc.get("lo", doc.get("value", 0)))
                hi = float(doc.get("hi", doc.get("value", lo)))
                directive = KeepDirective(min(lo, hi), max(lo, hi))
            room = body.get("room")
            scope = Scope.room(engine.config.find_room(room) or room) if room \
                else Scope.home()
            try:
                request, commands = engine.concrete.apply_override(
                    body.get("state", ""), directive, scope,
                    body.get("ticket", ""), engine.tick_index,
                    engine.now_seconds(), replay=engine.replay)
            except HearthError as exc:
                engine.audit.append(service="concrete-guard", op="override",
                                    outcome="deny", reason=type(exc).__name__,
                                    detail=str(exc), at=engine.now_seconds())
                raise
            engine._record_override(request, accepted=True)
            engine.audit.append(service="concrete-guard", op="override",
                                outcome="grant", state=body.get("state"),
                                at=engine.now_seconds())
            return {"status": "accepted", "tick": engine.tick_index,
                    "commands": [_command_trace(c, override=True) for c in commands],
                    "hold_ticks": engine.concrete.hold_ticks}

    @app.get("/state")
    def state(x_ticket: str | None = Header(default=None)):
        return gateway.state_view(_header_ticket(x_ticket))

    @app.get("/devices")
    def devices(x_ticket: str | None = Header(default=None)):
        with gateway.lock:
            gateway._identity(_header_ticket(x_ticket))
            out = {}
            for device_id, device in engine.fleet.devices.items():
                d = device.descriptor
                out[device_id] = {"room": d.room, "variable": d.variable,
                                  "mode": d.mode, "state": device.state_label(),
                                  "setpoint": device.setpoint, "band": device.band,
                                  "output": device.output}
            return {"devices": out, "tick": engine.tick_index}

    @app.post("/rules/proposals")
    def propose(body: dict):
        with gateway.lock:
            proposal = engine.script_mgr.propose_rule(
                body.get("rule", ""), body.get("owner", ""),
                body.get("ticket"), engine.now_seconds(), tick=engine.tick_index)
            return _proposal_json(proposal)

    @app.get("/rules/pending")
    def pending(x_ticket: str | None = Header(default=None)):
        with gateway.lock:
            gateway._identity(_header_ticket(x_ticket))
            return {"pending": [_proposal_json(p) for p in engine.script_mgr.pending()],
                    "tick": engine.tick_index}

    @app.post("/rules/{proposal_id}/resolve")
    def resolve(proposal_id: str, body: dict):
        with gateway.lock:
            _, account = gateway._identity(body.get("ticket"))
            resolver = account.owner_id if account else ""
            accept = body.get("verdict", "").lower() == "accept"
            proposal = engine.script_mgr.resolve(proposal_id, accept, resolver,
                                                 tick=engine.tick_index)
            return _proposal_json(proposal)

    @app.get("/recommendations")
    def recommendations(x_ticket: str | None = Header(default=None)):
        with gateway.lock:
            gateway._identity(_header_ticket(x_ticket))
            miner = engine.ensure_miner()
            return {"recommendations": [rec.to_json() for rec in miner.items.values()],
                    "tick": engine.tick_index}

    @app.post("/recommendations/{rec_id}/verdict")
    def verdict(rec_id: str, body: dict):
        with gateway.lock:
            gateway._identity(body.get("ticket"))
            miner = engine.ensure_miner()
            if body.get("verdict", "").lower() == "reject":
                updated = miner.reject(rec_id)
                return {"recommendation": updated.to_json()}
            updated = miner.promote(rec_id)
            proposal = engine.script_mgr.propose_rule(
                updated.rule_text, "learning-process", None,
                engine.now_seconds(), tick=engine.tick_index)
            return {"recommendation": updated.to_json(),
                    "proposal": _proposal_json(proposal)}

    @app.get("/notifications")
    def notifications(since: int = 0, wait: float = 0.0):
        deadline = time.monotonic() + min(wait, 25.0)
        while True:
            with gateway.lock:
                items = engine.notifications.since(since)
                seq = len(engine.notifications.items)
            if items or time.monotonic() >= deadline:
                return {"items": items, "seq": seq}
            time.sleep(0.05)

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "tick": engine.tick_index}

    if static_dir is not None and static_dir.exists():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="console")
    return app


def _header_ticket(value: str | None) -> str | None:
    """Tickets travel in the x-ticket header, raw or base64-encoded."""
    if not value:
        return None
    if value.lstrip().startswith("{"):
        return value
    try:
        return base64.b64decode(value).decode("utf-8")
    except Exception:
        return value


# -- the split-mode seam -------------------------------------------------------


def build_concrete_app(gateway: Gateway) -> FastAPI:
    """The concrete half's endpoint: signed state requests in, commands out."""
    app = FastAPI(title="hearth concrete manager", docs_url=None, redoc_url=None)
    engine = gateway.engine

    @app.post("/internal/requests")
    def internal(body: dict):
        with gateway.lock:
            signed = SignedRequest(payload=body.get("payload", ""),
                                   issuer=body.get("issuer", ""),
                                   signature=body.get("signature", ""))
            commands = engine.concrete.handle_signed(signed, int(body.get("tick", -1)))
            return {"commands": [_command_trace(c) for c in commands],
                    "diagnostics": engine.concrete.diagnostics[-3:]}

    @app.get("/internal/devices")
    def devices():
        with gateway.lock:
            return {"devices": engine.fleet.states()}

    return app


class HttpSeam:
    """Generic half's view of a remote concrete manager over the wire format."""

    def __init__(self, client: httpx.Client):
        self.client = client

    def send(self, signed: SignedRequest, tick: int):
        response = self.client.post("/internal/requests",
                                    json={**signed.to_wire(), "tick": tick})
        response.raise_for_status()
        return response.json()["commands"]
