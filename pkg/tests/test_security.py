import dataclasses
import random

import pytest

from hearth.security import (
    AccessControlService, Acl, AclDenied, AclEntry, AuditLog,
    AuthenticationService, BadCredentials, Ed25519Signer, HmacSigner, KeyPair,
    ReplayCache, TicketInvalid, TrustStore, UserAccount, ValueConstraint,
    ValueDenied, parse_wire_ticket, sign_internal_request, verify_internal_request,
    verify_ticket,
)

# The access-control table under test, exactly as configured for residents
# and owners over the Temperature and Lights states.
TABLE = [
    {"state": "Temperature", "user": "resident", "actions": "Read", "value": "All"},
    {"state": "Temperature", "user": "resident", "actions": "SET", "value": "ABOVE 5"},
    {"state": "Lights", "user": "resident", "actions": "Read & SET", "value": "Any"},
    {"state": "Temperature", "user": "Owner", "actions": "Read & SET", "value": "Any"},
    {"state": "Lights", "user": "Owner", "actions": "Read & SET", "value": "None"},
]


def services(scheme="hmac"):
    audit = AuditLog()
    make = (lambda name: KeyPair(name, HmacSigner(f"key-{name}".encode()))) \
        if scheme == "hmac" else (lambda name: KeyPair(name, Ed25519Signer()))
    as_key, acs_key = make("as"), make("acs")
    users = {
        "joe": UserAccount.create("joe", "joe-secret", "Resident", "joe"),
        "owner": UserAccount.create("owner", "owner-secret", "Owner", "homeowner"),
    }
    as_trust = TrustStore()
    as_trust.add(as_key)
    acl = Acl([AclEntry.parse(e) for e in TABLE])
    auth = AuthenticationService(users, as_key, audit)
    acs = AccessControlService(acl, users, acs_key, as_trust, audit)
    client_trust = TrustStore()
    client_trust.add(as_key)
    client_trust.add(acs_key)
    return auth, acs, client_trust, audit


class TestAuthenticate:
    def test_grants_identity_ticket_with_default_ttl(self):
        auth, _, trust, _ = services()
        ticket = auth.authenticate("joe", "joe-secret", now=1000.0)
        assert ticket.subject == "joe" and ticket.claims == ()
        assert ticket.expiry == pytest.approx(1000.0 + 3600.0)
        assert verify_ticket(ticket, trust, now=1000.0).ok
        assert not verify_ticket(ticket, trust, now=1000.0 + 3601.0).ok

    def test_bad_credentials(self):
        auth, _, _, _ = services()
        with pytest.raises(BadCredentials):
            auth.authenticate("joe", "wrong", now=0.0)
        with pytest.raises(BadCredentials):
            auth.authenticate("ghost", "whatever", now=0.0)

    def test_clock_skew(self):
        from hearth.security import ClockSkew
        auth, _, _, _ = services()
        with pytest.raises(ClockSkew):
            auth.authenticate("joe", "joe-secret", now=0.0, client_time=500.0)

    def test_nonces_unique_per_issuer(self):
        auth, _, _, _ = services()
        a = auth.authenticate("joe", "joe-secret", now=0.0)
        b = auth.authenticate("joe", "joe-secret", now=0.0)
        assert a.nonce != b.nonce


class TestAuthorizeAgainstTheTable:
    def auth_ticket(self, user="joe", secret="joe-secret"):
        auth, acs, trust, audit = services()
        return auth.authenticate(user, secret, now=0.0), acs, trust, audit

    def test_resident_reads_temperature(self):
        ticket, acs, _, _ = self.auth_ticket()
        granted = acs.authorize(ticket, "Temperature", "read", None, now=0.0)
        assert granted.claims[0]["state"] == "Temperature"

    def test_resident_set_temperature_above_five(self):
        ticket, acs, _, _ = self.auth_ticket()
        granted = acs.authorize(ticket, "Temperature", "set", 7.0, now=0.0)
        assert granted.claims[0]["constraint"] == "ABOVE 5"
        with pytest.raises(ValueDenied):
            acs.authorize(ticket, "Temperature", "set", 3.0, now=0.0)

    def test_resident_lights_any(self):
        ticket, acs, _, _ = self.auth_ticket()
        assert acs.authorize(ticket, "Lights", "set", "ON", now=0.0)
        assert acs.authorize(ticket, "Lights", "read", None, now=0.0)

    def test_owner_temperature_any(self):
        ticket, acs, _, _ = self.auth_ticket("owner", "owner-secret")
        assert acs.authorize(ticket, "Temperature", "set", 3.0, now=0.0)

    def test_owner_lights_none_grants_nothing(self):
        ticket, acs, _, _ = self.auth_ticket("owner", "owner-secret")
        with pytest.raises(AclDenied):
            acs.authorize(ticket, "Lights", "read", None, now=0.0)
        with pytest.raises(AclDenied):
            acs.authorize(ticket, "Lights", "set", "ON", now=0.0)

    def test_unlisted_state_denied(self):
        ticket, acs, _, _ = self.auth_ticket()
        with pytest.raises(AclDenied):
            acs.authorize(ticket, "Volume", "set", 10.0, now=0.0)

    def test_expired_identity_rejected(self):
        ticket, acs, _, _ = self.auth_ticket()
        with pytest.raises(TicketInvalid):
            acs.authorize(ticket, "Temperature", "read", None, now=90_000.0)

    def test_band_values_respect_constraint(self):
        ticket, acs, _, _ = self.auth_ticket()
        assert acs.authorize(ticket, "Temperature", "set", (21.0, 23.0), now=0.0)
        with pytest.raises(ValueDenied):
            acs.authorize(ticket, "Temperature", "set", (3.0, 23.0), now=0.0)

    def test_plural_fold_matches_light_state(self):
        ticket, acs, _, _ = self.auth_ticket()
        granted = acs.authorize(ticket, "Light", "set", "ON", now=0.0)
        assert granted.claims[0]["state"] == "Lights"


class TestWireHardening:
    @pytest.mark.parametrize("scheme", ["hmac", "ed25519"])
    def test_every_single_byte_mutation_is_rejected(self, scheme):
        auth, acs, trust, _ = services(scheme)
        identity = auth.authenticate("joe", "joe-secret", now=0.0)
        acs_ticket = acs.authorize(identity, "Temperature", "set", 7.0, now=0.0)
        wire = acs_ticket.to_wire().encode("utf-8")
        assert verify_ticket(wire, trust, now=0.0).ok
        rng = random.Random(5)
        rejected = 0
        for _ in range(100):
            pos = rng.randrange(len(wire))
            replacement = rng.randrange(256)
            while replacement == wire[pos]:
                replacement = rng.randrange(256)
            mutated = wire[:pos] + bytes([replacement]) + wire[pos + 1:]
            if not verify_ticket(mutated, trust, now=0.0).ok:
                rejected += 1
        assert rejected == 100

    def test_uppercase_hex_signature_rejected(self):
        auth, _, trust, _ = services()
        ticket = auth.authenticate("joe", "joe-secret", now=0.0)
        wire = ticket.to_wire().replace(ticket.signature, ticket.signature.upper())
        assert verify_ticket(wire, trust, now=0.0).reason == "Malformed"

    def test_unknown_issuer(self):
        auth, _, _, _ = services()
        ticket = auth.authenticate("joe", "joe-secret", now=0.0)
        assert verify_ticket(ticket, TrustStore(), now=0.0).reason == "UnknownIssuer"

    def test_replayed_nonce_across_different_tickets(self):
        auth, _, trust, _ = services()
        a = auth.authenticate("joe", "joe-secret", now=0.0)
        forged = dataclasses.replace(a, subject="owner")
        cache = ReplayCache()
        assert verify_ticket(a, trust, now=0.0, replay=cache).ok
        result = verify_ticket(
            dataclasses.replace(forged, signature=a.signature), trust, 0.0,
            replay=cache)
        assert not result.ok  # different content, same nonce or bad signature

    def test_one_off_consumption(self):
        auth, _, trust, _ = services()
        ticket = auth.authenticate("joe", "joe-secret", now=0.0)
        cache = ReplayCache()
        assert verify_ticket(ticket, trust, 0.0, replay=cache, consume=True).ok
        again = verify_ticket(ticket, trust, 0.0, replay=cache, consume=True)
        assert again.reason == "ReplayedNonce"


class TestInternalChannel:
    def test_engine_signature_accepted_resident_rejected(self):
        engine = KeyPair("generic-home-manager", HmacSigner(b"e"))
        resident = KeyPair("joe", HmacSigner(b"j"))
        trust = TrustStore()
        trust.add(engine)
        ok = sign_internal_request("payload", engine)
        assert verify_internal_request(ok, trust).ok
        bad = sign_internal_request("payload", resident)
        assert verify_internal_request(bad, trust).reason == "UnknownIssuer"
        unsigned = dataclasses.replace(ok, signature="")
        assert not verify_internal_request(unsigned, trust).ok


class TestAuditAndMonotonicity:
    def test_every_decision_appends_one_record(self):
        auth, acs, _, audit = services()
        before = len(audit.records)
        ticket = auth.authenticate("joe", "joe-secret", now=0.0)
        with pytest.raises(BadCredentials):
            auth.authenticate("joe", "nope", now=0.0)
        acs.authorize(ticket, "Temperature", "set", 7.0, now=0.0)
        with pytest.raises(ValueDenied):
            acs.authorize(ticket, "Temperature", "set", 3.0, now=0.0)
        with pytest.raises(AclDenied):
            acs.authorize(ticket, "Volume", "set", 1.0, now=0.0)
        assert len(audit.records) - before == 5
        outcomes = [r["outcome"] for r in audit.records[-5:]]
        assert outcomes == ["grant", "deny", "grant", "deny", "deny"]

    def test_removing_an_entry_only_shrinks_grants(self):
        acl_full = Acl([AclEntry.parse(e) for e in TABLE])
        acl_less = Acl([AclEntry.parse(e) for e in TABLE[1:]])
        for state in ("Temperature", "Lights"):
            for action in ("read", "set"):
                full = acl_full.match("joe", "Resident", state, action)
                less = acl_less.match("joe", "Resident", state, action)
                if less is not None:
                    assert full is not None

    def test_no_acl_field_can_name_a_device(self):
        fields = {f.name for f in dataclasses.fields(AclEntry)}
        assert "device" not in fields and fields == {"state", "user", "actions",
                                                     "constraint"}


class TestValueConstraint:
    def test_parse_forms(self):
        assert ValueConstraint.parse("ABOVE 5").allows(7)
        assert not ValueConstraint.parse("ABOVE 5").allows(5)
        assert ValueConstraint.parse("BELOW 25").allows(10)
        assert ValueConstraint.parse("Between 3 8").allows(5)
        assert not ValueConstraint.parse("none").allows(1)
        assert ValueConstraint.parse("All").allows(123)
