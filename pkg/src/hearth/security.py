"""Authentication and access control over home states.

Two services: an authentication service issuing identity tickets, and an
access-control service that checks the ACL and issues claim tickets. Every
grant names a *state* (a variable base quantity) — nothing in this module can
reference a device id, which is what keeps access control at the level of
desired home states rather than hardware.

Tickets travel as canonical JSON (fixed key order, compact separators) with a
detached lowercase-hex signature over the canonical bytes of all prior
fields. Verification re-canonicalizes and requires byte equality with the
received wire before checking the signature, so any mutation fails closed.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import json
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey, Ed25519PublicKey,
)

from .errors import HearthError

DEFAULT_TTL_SECONDS = 3600.0
CLOCK_SKEW_TOLERANCE = 60.0
REPLAY_CACHE_LIMIT = 10_000

_TICKET_KEYS = ("subject", "origin", "claims", "issued_at", "expiry", "nonce", "issuer")


class BadCredentials(HearthError):
    pass


class ClockSkew(HearthError):
    pass


class TicketInvalid(HearthError):
    pass


class AclDenied(HearthError):
    pass


class ValueDenied(HearthError):
    pass


# -- signing schemes --------------------------------------------------------


class Signer:
    scheme: str

    def sign(self, data: bytes) -> bytes:
        raise NotImplementedError

    def verifier_spec(self) -> dict:
        raise NotImplementedError


class Ed25519Signer(Signer):
    scheme = "ed25519"

    def __init__(self, private: Ed25519PrivateKey | None = None):
        self.private = private or Ed25519PrivateKey.generate()

    def sign(self, data: bytes) -> bytes:
        return self.private.sign(data)

    def verifier_spec(self) -> dict:
        raw = self.private.public_key().public_bytes_raw()
        return {"scheme": self.scheme, "key": raw.hex()}


class HmacSigner(Signer):
    """Deterministic keyed-hash scheme for bit-stable test vectors."""

    scheme = "hmac-sha256"

    def __init__(self, key: bytes):
        self.key = key

    def sign(self, data: bytes) -> bytes:
        return hmac_mod.new(self.key, data, hashlib.sha256).digest()

    def verifier_spec(self) -> dict:
        return {"scheme": self.scheme, "key": self.key.hex()}


def _verify_with(spec: dict, data: bytes, signature: bytes) -> bool:
    scheme = spec.get("scheme")
    key = bytes.fromhex(spec.get("key", ""))
    if scheme == "ed25519":
        try:
            Ed25519PublicKey.from_public_bytes(key).verify(signature, data)
            return True
        except (InvalidSignature, ValueError):
            return False
    if scheme == "hmac-sha256":
        expected = hmac_mod.new(key, data, hashlib.sha256).digest()
        return hmac_mod.compare_digest(expected, signature)
    return False


@dataclass
class KeyPair:
    principal: str
    signer: Signer

    def spec(self) -> dict:
        return self.signer.verifier_spec()


class TrustStore:
    """principal id -> verifier spec; loadable from a JSON file."""

    def __init__(self, entries: dict[str, dict] | None = None):
        self.entries = dict(entries or {})

    def add(self, keypair: KeyPair) -> None:
        self.entries[keypair.principal] = keypair.spec()

    def spec_for(self, principal: str) -> dict | None:
        return self.entries.get(principal)

    def to_file(self, path: Path) -> None:
        path.write_text(json.dumps(self.entries, indent=2, sort_keys=True))

    @staticmethod
    def from_file(path: Path) -> "TrustStore":
        return TrustStore(json.loads(path.read_text()))


# -- ACL ---------------------------------------------------------------------


@dataclass(frozen=True)
class ValueConstraint:
    """All/Any grant every value; None grants nothing; bounds gate Set values."""

    kind: str  # all | any | none | above | below | between
    lo: float | None = None
    hi: float | None = None

    @staticmethod
    def parse(text: str | dict) -> "ValueConstraint":
        if isinstance(text, dict):
            return ValueConstraint(text["kind"], text.get("lo"), text.get("hi"))
        words = str(text).strip().split()
        head = words[0].lower() if words else "any"
        if head in ("all", "any", "none"):
            return ValueConstraint(head)
        if head == "above":
            return ValueConstraint("above", lo=float(words[1]))
        if head == "below":
            return ValueConstraint("below", hi=float(words[1]))
        if head == "between":
            lo, hi = sorted((float(words[1]), float(words[2])))
            return ValueConstraint("between", lo=lo, hi=hi)
        raise ValueError(f"unknown value constraint {text!r}")

    def grants_anything(self) -> bool:
        return self.kind != "none"

    def allows(self, value: float | str | tuple[float, float] | None) -> bool:
        if self.kind == "none":
            return False
        if self.kind in ("all", "any") or value is None:
            return True
        if isinstance(value, str):
            return True  # bounds constrain numeric targets only
        if isinstance(value, tuple):
            lo, hi = value
            return self.allows(lo) and self.allows(hi)
        v = float(value)
        if self.kind == "above":
            return v > (self.lo or 0.0)
        if self.kind == "below":
            return v < (self.hi or 0.0)
        return (self.lo or 0.0) <= v <= (self.hi or 0.0)

    def describe(self) -> str:
        if self.kind == "above":
            return f"ABOVE {self.lo:g}"
        if self.kind == "below":
            return f"BELOW {self.hi:g}"
        if self.kind == "between":
            return f"BETWEEN {self.lo:g} {self.hi:g}"
        return self.kind.capitalize()

    def to_json(self) -> dict:
        doc: dict = {"kind": self.kind}
        if self.lo is not None:
            doc["lo"] = self.lo
        if self.hi is not None:
            doc["hi"] = self.hi
        return doc


@dataclass(frozen=True)
class AclEntry:
    state: str                      # variable base quantity, e.g. Temperature
    user: str                       # role name or owner id
    actions: frozenset[str]         # subset of {read, set}
    constraint: ValueConstraint

    @staticmethod
    def parse(doc: dict) -> "AclEntry":
        actions = doc["actions"]
        if isinstance(actions, str):
            actions = [a.strip() for a in actions.replace("&", " ").split()]
        return AclEntry(
            state=doc["state"],
            user=doc["user"],
            actions=frozenset(a.lower() for a in actions),
            constraint=ValueConstraint.parse(doc.get("value", "any")))


def _state_key(state: str) -> str:
    s = state.lower().replace("_", "")
    if s.endswith("s") and len(s) > 2:
        s = s[:-1]
    return s


class Acl:
    def __init__(self, entries: list[AclEntry]):
        self.entries = list(entries)

    def match(self, subject: str, role: str | None, state: str, action: str
              ) -> AclEntry | None:
        """Owner-id entries win over role entries; absence of a match denies."""
        action = action.lower()
        key = _state_key(state)
        candidates = [e for e in self.entries
                      if _state_key(e.state) == key and action in e.actions]
        for entry in candidates:
            if entry.user.lower() == subject.lower():
                return entry
        for entry in candidates:
            if role is not None and entry.user.lower() == role.lower():
                return entry
        return None

    def grants_for(self, subject: str, role: str | None) -> list[dict]:
        out = []
        for entry in self.entries:
            if entry.user.lower() in {subject.lower(), (role or "").lower()}:
                out.append({"state": entry.state,
                            "actions": sorted(entry.actions),
                            "value": entry.constraint.describe()})
        return out


# -- tickets -----------------------------------------------------------------


@dataclass(frozen=True)
class Ticket:
    subject: str
    origin: str
    claims: tuple[dict, ...]     # ACS claims: {state, action, constraint}
    issued_at: float
    expiry: float
    nonce: str
    issuer: str
    signature: str               # lowercase hex over the canonical prior fields

    def signed_payload(self) -> bytes:
        return _canonical_fields(self.subject, self.origin, self.claims,
                                 self.issued_at, self.expiry, self.nonce, self.issuer)

    def to_wire(self) -> str:
        doc = _field_dict(self.subject, self.origin, self.claims,
                          self.issued_at, self.expiry, self.nonce, self.issuer)
        doc["signature"] = self.signature
        return json.dumps(doc, separators=(",", ":"))


def _field_dict(subject, origin, claims, issued_at, expiry, nonce, issuer) -> dict:
    return {
        "subject": subject,
        "origin": origin,
        "claims": [dict(sorted(c.items())) for c in claims],
        "issued_at": float(issued_at),
        "expiry": float(expiry),
        "nonce": nonce,
        "issuer": issuer,
    }


def _canonical_fields(subject, origin, claims, issued_at, expiry, nonce, issuer) -> bytes:
    doc = _field_dict(subject, origin, claims, issued_at, expiry, nonce, issuer)
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    reason: str | None = None    # BadSignature | Expired | ReplayedNonce |
                                 # ClaimMismatch | UnknownIssuer | Malformed

    @staticmethod
    def failure(reason: str) -> "VerifyResult":
        return VerifyResult(False, reason)


class ReplayCache:
    """Bounded (issuer, nonce) -> signature map with expiry-based eviction."""

    def __init__(self, limit: int = REPLAY_CACHE_LIMIT):
        self.limit = limit
        self._seen: dict[tuple[str, str], tuple[str, float]] = {}

    def check_and_store(self, issuer: str, nonce: str, signature: str,
                        expiry: float, now: float, consume: bool) -> bool:
        """False when the nonce is replayed. A repeated sighting of the very
        same ticket is fine unless the caller consumes it (one-off use)."""
        self._evict(now)
        key = (issuer, nonce)
        hit = self._seen.get(key)
        if hit is not None:
            same = hit[0] == signature
            if not same or consume:
                return False
            return True
        if len(self._seen) >= self.limit:
            self._evict(now, force=True)
        self._seen[key] = (signature, expiry)
        return True

    def _evict(self, now: float, force: bool = False) -> None:
        dead = [k for k, (_, exp) in self._seen.items() if exp < now]
        for k in dead:
            del self._seen[k]
        while force and len(self._seen) >= self.limit:
            self._seen.pop(next(iter(self._seen)))


def parse_wire_ticket(wire: str | bytes) -> Ticket:
    """Strict wire decoding: the document must re-encode to identical bytes."""
    raw = wire.encode("utf-8") if isinstance(wire, str) else wire
    try:
        doc = json.loads(raw)
        if not isinstance(doc, dict):
            raise ValueError("not an object")
        signature = doc.get("signature", "")
        if (not isinstance(signature, str) or signature != signature.lower()
                or signature == ""):
            raise ValueError("signature must be lowercase hex")
        bytes.fromhex(signature)
        ticket = Ticket(
            subject=doc["subject"], origin=doc["origin"],
            claims=tuple(doc["claims"]), issued_at=float(doc["issued_at"]),
            expiry=float(doc["expiry"]), nonce=str(doc["nonce"]),
            issuer=doc["issuer"], signature=signature)
        if ticket.to_wire().encode("utf-8") != raw:
            raise ValueError("non-canonical encoding")
        return ticket
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise TicketInvalid(f"malformed ticket: {exc}") from exc


def verify_ticket(ticket: Ticket | str | bytes, trust: TrustStore, now: float,
                  expected_claim: dict | None = None,
                  replay: ReplayCache | None = None,
                  consume: bool = False) -> VerifyResult:
    """Signature, expiry, nonce freshness, and claim coverage checks."""
    if not isinstance(ticket, Ticket):
        try:
            ticket = parse_wire_ticket(ticket)
        except TicketInvalid:
            return VerifyResult.failure("Malformed")
    spec = trust.spec_for(ticket.issuer)
    if spec is None:
        return VerifyResult.failure("UnknownIssuer")
    try:
        signature = bytes.fromhex(ticket.signature)
    except ValueError:
        return VerifyResult.failure("Malformed")
    if not _verify_with(spec, ticket.signed_payload(), signature):
        return VerifyResult.failure("BadSignature")
    if now > ticket.expiry:
        return VerifyResult.failure("Expired")
    if ticket.issued_at > now + CLOCK_SKEW_TOLERANCE:
        return VerifyResult.failure("Expired")
    if replay is not None and not replay.check_and_store(
            ticket.issuer, ticket.nonce, ticket.signature, ticket.expiry, now, consume):
        return VerifyResult.failure("ReplayedNonce")
    if expected_claim is not None and not _claim_covers(ticket, expected_claim):
        return VerifyResult.failure("ClaimMismatch")
    return VerifyResult(True)


def _claim_covers(ticket: Ticket, want: dict) -> bool:
    for claim in ticket.claims:
        if _state_key(claim.get("state", "")) != _state_key(want.get("state", "")):
            continue
        if claim.get("action", "").lower() != want.get("action", "").lower():
            continue
        constraint = ValueConstraint.parse(claim.get("constraint", "any"))
        if constraint.allows(want.get("value")):
            return True
    return False


# -- audit -------------------------------------------------------------------


class AuditLog:
    """Serialized appender; one JSON record per decision (the third A)."""

    def __init__(self, path: Path | None = None):
        self.path = path
        self.records: list[dict] = []
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("")

    def append(self, **record) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n")


# -- services ----------------------------------------------------------------


@dataclass(frozen=True)
class UserAccount:
    name: str
    secret_hash: str   # sha256(salt + secret) hex
    salt: str
    role: str
    owner_id: str
    origin: str = "local"

    @staticmethod
    def create(name: str, secret: str, role: str, owner_id: str | None = None,
               origin: str = "local", salt: str = "hearth") -> "UserAccount":
        digest = hashlib.sha256((salt + secret).encode("utf-8")).hexdigest()
        return UserAccount(name=name, secret_hash=digest, salt=salt, role=role,
                           owner_id=owner_id or name, origin=origin)

    def check(self, secret: str) -> bool:
        digest = hashlib.sha256((self.salt + secret).encode("utf-8")).hexdigest()
        return hmac_mod.compare_digest(digest, self.secret_hash)


class AuthenticationService:
    """Issues identity tickets against the configured credential table."""

    def __init__(self, users: dict[str, UserAccount], keypair: KeyPair,
                 audit: AuditLog, ttl: float = DEFAULT_TTL_SECONDS):
        self.users = users
        self.keypair = keypair
        self.audit = audit
        self.ttl = ttl
        self._nonce_counter = 0

    def _next_nonce(self) -> str:
        self._nonce_counter += 1
        return f"{self.keypair.principal}:{self._nonce_counter:08d}"

    def authenticate(self, username: str, secret: str, now: float,
                     client_time: float | None = None) -> Ticket:
        if client_time is not None and abs(client_time - now) > CLOCK_SKEW_TOLERANCE:
            self.audit.append(service="as", op="authenticate", subject=username,
                              outcome="deny", reason="ClockSkew", at=now)
            raise ClockSkew("client clock outside tolerance")
        account = self.users.get(username)
        if account is None or not account.check(secret):
            self.audit.append(service="as", op="authenticate", subject=username,
                              outcome="deny", reason="BadCredentials", at=now)
            raise BadCredentials("unknown user or wrong secret")
        payload_nonce = self._next_nonce()
        fields = (username, account.origin, (), now, now + self.ttl,
                  payload_nonce, self.keypair.principal)
        signature = self.keypair.signer.sign(_canonical_fields(*fields)).hex()
        ticket = Ticket(*fields, signature=signature)
        self.audit.append(service="as", op="authenticate", subject=username,
                          outcome="grant", at=now, nonce=payload_nonce)
        return ticket


class AccessControlService:
    """Checks the ACL and issues claim tickets signed with its own key."""

    def __init__(self, acl: Acl, users: dict[str, UserAccount], keypair: KeyPair,
                 trust: TrustStore, audit: AuditLog, ttl: float = DEFAULT_TTL_SECONDS):
        self.acl = acl
        self.users = users
        self.keypair = keypair
        self.trust = trust
        self.audit = audit
        self.ttl = ttl
        self.replay = ReplayCache()
        self._nonce_counter = 0

    def _next_nonce(self) -> str:
        self._nonce_counter += 1
        return f"{self.keypair.principal}:{self._nonce_counter:08d}"

    def authorize(self, as_ticket: Ticket | str, state: str, action: str,
                  value: float | str | tuple[float, float] | None, now: float) -> Ticket:
        result = verify_ticket(as_ticket, self.trust, now)
        if not result.ok:
            self.audit.append(service="acs", op="authorize", outcome="deny",
                              reason=result.reason, state=state, action=action, at=now)
            raise TicketInvalid(f"identity ticket rejected: {result.reason}")
        identity = as_ticket if isinstance(as_ticket, Ticket) else parse_wire_ticket(as_ticket)
        account = self.users.get(identity.subject)
        role = account.role if account else None
        entry = self.acl.match(account.owner_id if account else identity.subject,
                               role, state, action)
        if entry is None or not entry.constraint.grants_anything():
            self.audit.append(service="acs", op="authorize", subject=identity.subject,
                              outcome="deny", reason="AclDenied", state=state,
                              action=action, at=now)
            raise AclDenied(f"no grant for {identity.subject} on {state}/{action}",
                            state=state, action=action)
        if not entry.constraint.allows(value):
            self.audit.append(service="acs", op="authorize", subject=identity.subject,
                              outcome="deny", reason="ValueDenied", state=state,
                              action=action, at=now,
                              constraint=entry.constraint.describe())
            raise ValueDenied(
                f"value outside the grant ({entry.constraint.describe()})",
                state=state, action=action, constraint=entry.constraint.describe())
        claim = {"state": entry.state, "action": action.lower(),
                 "constraint": entry.constraint.describe()}
        fields = (identity.subject, identity.origin, (claim,), now, now + self.ttl,
                  self._next_nonce(), self.keypair.principal)
        signature = self.keypair.signer.sign(_canonical_fields(*fields)).hex()
        ticket = Ticket(*fields, signature=signature)
        self.audit.append(service="acs", op="authorize", subject=identity.subject,
                          outcome="grant", state=entry.state, action=action.lower(),
                          at=now, constraint=entry.constraint.describe())
        return ticket


# -- the generic -> concrete trust link --------------------------------------


@dataclass(frozen=True)
class SignedRequest:
    payload: str      # canonical JSON of the state request
    issuer: str
    signature: str    # lowercase hex

    def to_wire(self) -> dict:
        return {"payload": self.payload, "issuer": self.issuer,
                "signature": self.signature}


def sign_internal_request(payload: str, keypair: KeyPair) -> SignedRequest:
    signature = keypair.signer.sign(payload.encode("utf-8")).hex()
    return SignedRequest(payload=payload, issuer=keypair.principal, signature=signature)


def verify_internal_request(request: SignedRequest, trust: TrustStore) -> VerifyResult:
    spec = trust.spec_for(request.issuer)
    if spec is None:
        return VerifyResult.failure("UnknownIssuer")
    try:
        signature = bytes.fromhex(request.signature)
    except ValueError:
        return VerifyResult.failure("Malformed")
    if request.signature != request.signature.lower() or not request.signature:
        return VerifyResult.failure("Malformed")
    if not _verify_with(spec, request.payload.encode("utf-8"), signature):
        return VerifyResult.failure("BadSignature")
    return VerifyResult(True)
