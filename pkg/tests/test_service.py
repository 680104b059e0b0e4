import datetime as dt

import pytest
from fastapi.testclient import TestClient

from hearth.engine import Engine
from hearth.scenario import Scenario, ScenarioEvent
from hearth.service import Gateway, build_app


@pytest.fixture()
def client(config, bundle):
    scenario = Scenario(seed=1, start=dt.datetime(2025, 6, 16, 7, 0),
                        duration_ticks=500, events=(
        ScenarioEvent(0, "ambient", {"quantity": "Temperature", "value": 30}),
        ScenarioEvent(0, "presence", {"resident": "Joe", "location": "BedRoom"}),
    ))
    script = ("IF (Joe IN HOME AND SUMMER AND MORNING) THEN "
              "KEEP Joe ROOM_TEMPERATURE KEEP BETWEEN 21 23\n"
              "IF Anyone IN Home AND AllTenants NOT IN Home THEN WARN Joe\n")
    engine = Engine(config, bundle, script_text=script, scenario=scenario,
                    deterministic_keys=True)
    for _ in range(3):
        engine.tick()
    gateway = Gateway(engine)
    test_client = TestClient(build_app(gateway), raise_server_exceptions=False)
    test_client.engine = engine
    return test_client


def login(client, user, secret):
    response = client.post("/auth/login", json={"user": user, "secret": secret})
    assert response.status_code == 200
    return response.json()


class TestAuthEndpoints:
    def test_login_returns_role_and_grants(self, client):
        body = login(client, "joe", "joe-secret")
        assert body["role"] == "Resident"
        states = {g["state"] for g in body["grants"]}
        assert "Temperature" in states and "Lights" in states

    def test_bad_login_is_401(self, client):
        response = client.post("/auth/login", json={"user": "joe", "secret": "x"})
        assert response.status_code == 401
        assert response.json()["error"]["code"] == "BadCredentials"

    def test_authorize_value_denied(self, client):
        body = login(client, "joe", "joe-secret")
        response = client.post("/authorize", json={
            "ticket": body["ticket"], "state": "Temperature", "action": "set",
            "value": 3})
        assert response.status_code == 403
        assert response.json()["error"]["code"] == "ValueDenied"


class TestStateAndDevices:
    def test_state_requires_ticket(self, client):
        assert client.get("/state").status_code == 401

    def test_state_filtered_by_read_grants(self, client):
        joe = login(client, "joe", "joe-secret")
        view = client.get("/state", headers={"x-ticket": joe["ticket"]}).json()
        assert view["presence"]["Joe"] == "BedRoom"
        assert "Temperature" in view["rooms"]["BedRoom"]
        assert "Humidity" not in view["rooms"]["LivingRoom"]  # no read grant

    def test_devices_snapshot(self, client):
        joe = login(client, "joe", "joe-secret")
        body = client.get("/devices", headers={"x-ticket": joe["ticket"]}).json()
        assert body["devices"]["ac_bedroom"]["room"] == "BedRoom"


class TestOverrideFlow:
    def test_grant_then_denial_renders_constraint(self, client):
        joe = login(client, "joe", "joe-secret")
        acs = client.post("/authorize", json={
            "ticket": joe["ticket"], "state": "Temperature",
            "action": "set"}).json()["ticket"]
        ok = client.post("/override", json={
            "ticket": acs, "state": "Temperature", "room": "BedRoom",
            "directive": {"kind": "keep", "lo": 24, "hi": 24}})
        assert ok.status_code == 200 and ok.json()["status"] == "accepted"
        acs2 = client.post("/authorize", json={
            "ticket": joe["ticket"], "state": "Temperature",
            "action": "set"}).json()["ticket"]
        denied = client.post("/override", json={
            "ticket": acs2, "state": "Temperature", "room": "BedRoom",
            "directive": {"kind": "keep", "lo": 3, "hi": 3}})
        assert denied.status_code == 403
        assert "ABOVE 5" in denied.json()["error"]["detail"]

    def test_replayed_claim_ticket_rejected(self, client):
        joe = login(client, "joe", "joe-secret")
        acs = client.post("/authorize", json={
            "ticket": joe["ticket"], "state": "Temperature",
            "action": "set"}).json()["ticket"]
        body = {"ticket": acs, "state": "Temperature", "room": "BedRoom",
                "directive": {"kind": "keep", "lo": 24, "hi": 24}}
        assert client.post("/override", json=body).status_code == 200
        again = client.post("/override", json=body)
        assert again.status_code == 401


class TestProposalEndpoints:
    def test_propose_pending_resolve(self, client):
        joe = login(client, "joe", "joe-secret")
        ruth = login(client, "ruth", "ruth-secret")
        first = client.post("/rules/proposals", json={
            "rule": "IF Night THEN SET Light IN Kitchen ON",
            "owner": "joe", "ticket": joe["ticket"]}).json()
        assert first["status"] == "Accepted"
        second = client.post("/rules/proposals", json={
            "rule": "IF Night THEN SET Light IN Kitchen OFF",
            "owner": "ruth", "ticket": ruth["ticket"]}).json()
        assert second["status"] == "Escalated"
        assert second["escalated_to"] == "homeowner"
        assert second["conflicts"][0]["witness"]["minutes"]

        owner = login(client, "owner", "owner-secret")
        pending = client.get("/rules/pending",
                             headers={"x-ticket": owner["ticket"]}).json()
        assert [p["id"] for p in pending["pending"]] == [second["id"]]
        resolved = client.post(f"/rules/{second['id']}/resolve", json={
            "verdict": "accept", "ticket": owner["ticket"]}).json()
        assert resolved["status"] == "Accepted"

    def test_non_target_resolver_forbidden(self, client):
        joe = login(client, "joe", "joe-secret")
        ruth = login(client, "ruth", "ruth-secret")
        client.post("/rules/proposals", json={
            "rule": "IF Night THEN SET Light IN Kitchen ON",
            "owner": "joe", "ticket": joe["ticket"]})
        second = client.post("/rules/proposals", json={
            "rule": "IF Night THEN SET Light IN Kitchen OFF",
            "owner": "ruth", "ticket": ruth["ticket"]}).json()
        response = client.post(f"/rules/{second['id']}/resolve", json={
            "verdict": "accept", "ticket": joe["ticket"]})
        assert response.status_code == 403


class TestNotifications:
    def test_feed_sequencing(self, client):
        body = client.get("/notifications", params={"since": 0}).json()
        assert body["seq"] == len(body["items"]) and body["seq"] >= 1
        later = client.get("/notifications", params={"since": body["seq"]}).json()
        assert later["items"] == []


class TestRecommendationEndpoints:
    def _plant_behavior(self, client):
        """Drive the engine so the light tracks Joe's presence exactly."""
        from hearth.devices import DeviceCommand, Switch
        engine = client.engine
        for t in range(120):
            here = (engine.tick_index // 15) % 2 == 0
            engine.presence["Joe"] = "BedRoom" if here else None
            engine.fleet.dispatch_command(DeviceCommand(
                "light_bedroom", Switch("ON" if here else "OFF"),
                engine.now_seconds()))
            engine.tick()

    def test_reject_verdict_raises_threshold(self, client):
        self._plant_behavior(client)
        joe = login(client, "joe", "joe-secret")
        recs = client.get("/recommendations",
                          headers={"x-ticket": joe["ticket"]}).json()
        target = [r for r in recs["recommendations"]
                  if "Joe IN BedRoom" in r["rule"] and "ON" in r["rule"]]
        assert target, recs
        rec = target[0]
        verdict = client.post(f"/recommendations/{rec['id']}/verdict", json={
            "verdict": "reject", "ticket": joe["ticket"]}).json()
        assert verdict["recommendation"]["status"] == "Rejected"
        assert verdict["recommendation"]["threshold"] > rec["score"]

    def test_accept_verdict_forwards_as_proposal(self, client):
        self._plant_behavior(client)
        joe = login(client, "joe", "joe-secret")
        recs = client.get("/recommendations",
                          headers={"x-ticket": joe["ticket"]}).json()
        rec = [r for r in recs["recommendations"]
               if "Joe IN BedRoom" in r["rule"] and "ON" in r["rule"]][0]
        body = client.post(f"/recommendations/{rec['id']}/verdict", json={
            "verdict": "accept", "ticket": joe["ticket"]}).json()
        assert body["recommendation"]["status"] == "Promoted"
        assert body["proposal"]["status"] == "RecommendationOnly"
        assert body["proposal"]["owner"] == "learning-process"
