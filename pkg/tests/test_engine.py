import datetime as dt
import json
from pathlib import Path

import pytest

from hearth.admin import load_policy
from hearth.engine import Engine, run_scenario
from hearth.scenario import Scenario, ScenarioEvent, load_scenario
from hearth.security import HmacSigner, KeyPair, sign_internal_request
from hearth.controlflow import KeepDirective, StateRequest
from hearth.dsl.ast import Scope

from conftest import DEMO

JOE_RULE = ("IF (Joe IN HOME AND SUMMER AND MORNING) THEN "
            "KEEP Joe ROOM_TEMPERATURE KEEP BETWEEN 21 23")


def joe_scenario(duration=45, extra=()):
    events = [
        ScenarioEvent(0, "ambient", {"quantity": "Temperature", "value": 30}),
        ScenarioEvent(0, "ambient", {"quantity": "Humidity", "value": 40}),
        ScenarioEvent(0, "presence", {"resident": "Joe", "location": "BedRoom"}),
        *extra,
    ]
    return Scenario(seed=3, start=dt.datetime(2025, 6, 16, 7, 0),
                    tick_seconds=60, duration_ticks=duration,
                    events=tuple(sorted(events, key=lambda e: e.at_tick)))


def make_engine(config, bundle, scenario, script=JOE_RULE, out_dir=None):
    return Engine(config, bundle, script_text=script, scenario=scenario,
                  out_dir=out_dir, deterministic_keys=True)


class TestWalkthrough:
    def test_rule_fires_and_ac_converges(self, config, bundle):
        engine = make_engine(config, bundle, joe_scenario())
        temps = []
        for _ in range(45):
            engine.tick()
            temps.append(engine.physics.value("BedRoom", "Temperature"))
        report = engine.report()
        assert report.request_count >= 45  # level-triggered, one per tick
        setpoints = [c for t in report.trace for c in t.commands
                     if c.get("device") == "ac_bedroom" and "setpoint" in c]
        assert len(setpoints) == 1 and setpoints[0]["setpoint"] == 22.0
        entered = next(i for i, v in enumerate(temps) if 21 <= v <= 23)
        assert entered <= 30
        assert all(21 <= v <= 23 for v in temps[entered:])

    def test_no_second_command_when_already_satisfied(self, config, bundle):
        engine = make_engine(config, bundle, joe_scenario())
        engine.run(45)
        per_device = {}
        for t in engine.trace:
            for c in t.commands:
                per_device.setdefault(c["device"], []).append(c)
        # one band for the shutters, one setpoint for the AC, nothing repeated
        assert len(per_device.get("ac_bedroom", [])) == 1
        assert len(per_device.get("shutters_bedroom", [])) == 1


class TestDeterminism:
    def test_byte_identical_repositories(self, config, tmp_path):
        scenario = load_scenario(DEMO / "scenario.json", config)
        script = (DEMO / "script.rules").read_text()
        run_scenario(config, script, load_policy(DEMO / "policy.json"), scenario,
                     out_dir=tmp_path / "a")
        run_scenario(config, script, load_policy(DEMO / "policy.json"), scenario,
                     out_dir=tmp_path / "b")
        assert (tmp_path / "a/repository.ndjson").read_bytes() == \
               (tmp_path / "b/repository.ndjson").read_bytes()
        assert (tmp_path / "a/notifications.ndjson").read_bytes() == \
               (tmp_path / "b/notifications.ndjson").read_bytes()


class TestOverridePath:
    def test_override_pins_then_rules_resume(self, config, bundle):
        override = ScenarioEvent(10, "override", {
            "user": "joe", "secret": "joe-secret", "state": "Temperature",
            "room": "BedRoom", "directive": {"kind": "keep", "lo": 26, "hi": 26}})
        engine = make_engine(config, bundle, joe_scenario(60, extra=[override]))
        engine.concrete.hold_ticks = 15
        engine.run(60)
        suppressed = [t.tick for t in engine.trace
                      if any("suppressed by override pin" in d for d in t.diagnostics)]
        assert suppressed and min(suppressed) == 10
        assert max(suppressed) == 24  # pin expires, rules take over again
        accepted = [d for t in engine.trace for d in t.diagnostics
                    if "override accepted" in d]
        assert accepted

    def test_denied_override_logs_the_reason(self, config, bundle):
        override = ScenarioEvent(5, "override", {
            "user": "joe", "secret": "joe-secret", "state": "Temperature",
            "room": "BedRoom", "directive": {"kind": "keep", "lo": 3, "hi": 3}})
        engine = make_engine(config, bundle, joe_scenario(10, extra=[override]))
        engine.run(10)
        denials = [d for t in engine.trace for d in t.diagnostics
                   if "override denied" in d]
        assert denials and "AclDenied" in denials[0]
        audit = [r for r in engine.audit.records
                 if r.get("op") == "override" and r.get("outcome") == "deny"]
        assert audit and audit[0]["reason"] == "AclDenied"

    def test_override_recorded(self, config, bundle, tmp_path):
        override = ScenarioEvent(5, "override", {
            "user": "joe", "secret": "joe-secret", "state": "Temperature",
            "room": "BedRoom", "directive": {"kind": "keep", "lo": 24, "hi": 24}})
        engine = make_engine(config, bundle, joe_scenario(10, extra=[override]),
                             out_dir=tmp_path)
        engine.run(10)
        lines = (tmp_path / "overrides.ndjson").read_text().splitlines()
        assert len(lines) == 1 and json.loads(lines[0])["accepted"] is True


class TestSwapTiming:
    def test_mid_tick_proposal_activates_next_tick(self, config, bundle):
        proposal = ScenarioEvent(3, "proposal", {
            "owner": "joe", "user": "joe", "secret": "joe-secret",
            "rule": "IF Always THEN SET Light IN Kitchen ON"})
        engine = make_engine(config, bundle, joe_scenario(8, extra=[proposal]),
                             script="")
        engine.run(8)
        light_ticks = [t.tick for t in engine.trace
                       for r in t.requests if r["variable"] == "LightSET"]
        assert light_ticks and min(light_ticks) == 4
        receipt = engine.script_mgr.receipts[-1]
        assert receipt.requested_at_tick == 3 and receipt.activated_at_tick == 4


class TestSplitSeam:
    def test_http_seam_carries_commands(self, config, bundle):
        from fastapi.testclient import TestClient
        from hearth.service import Gateway, HttpSeam, build_concrete_app
        engine = make_engine(config, bundle, joe_scenario(5))
        gateway = Gateway(engine)
        engine.seam = HttpSeam(TestClient(build_concrete_app(gateway)))
        engine.run(3)
        commands = [c for t in engine.trace for c in t.commands]
        assert commands  # the shutters band crossed the HTTP seam

    def test_unsigned_requests_rejected_across_seam(self, config, bundle):
        from fastapi.testclient import TestClient
        from hearth.service import Gateway, HttpSeam, build_concrete_app
        engine = make_engine(config, bundle, joe_scenario(5))
        gateway = Gateway(engine)
        seam = HttpSeam(TestClient(build_concrete_app(gateway)))
        foreign = KeyPair("intruder", HmacSigner(b"zzz"))
        request = StateRequest(Scope.room("BedRoom"), "TemperatureKEEP",
                               KeepDirective(10, 12), {"rule": "x", "owner": "y"})
        signed = sign_internal_request(request.canonical_payload(0), foreign)
        assert seam.send(signed, 0) == []


class TestLearningVerdictEvent:
    def test_reject_verdict_raises_threshold(self, config, bundle):
        events = [ScenarioEvent(0, "ambient", {"quantity": "Temperature", "value": 25}),
                  ScenarioEvent(0, "presence", {"resident": "Joe",
                                                "location": "BedRoom"}),
                  ScenarioEvent(0, "device", {"device": "light_bedroom",
                                              "value": "ON"})]
        for t in range(1, 200):
            if t % 20 == 0:
                here = (t // 20) % 2 == 0
                events.append(ScenarioEvent(t, "presence", {
                    "resident": "Joe", "location": "BedRoom" if here else None}))
                events.append(ScenarioEvent(t, "device", {
                    "device": "light_bedroom", "value": "ON" if here else "OFF"}))
        events.append(ScenarioEvent(205, "recommendation_verdict", {
            "verdict": "reject", "rule_contains": "Joe IN BedRoom"}))
        scenario = Scenario(seed=1, start=dt.datetime(2025, 6, 16, 7, 0),
                            duration_ticks=210,
                            events=tuple(sorted(events, key=lambda e: e.at_tick)))
        engine = make_engine(config, bundle, scenario, script="")
        engine.run(210)
        assert engine.miner is not None
        rejected = [r for r in engine.miner.items.values() if r.status == "Rejected"]
        assert rejected and rejected[0].threshold > rejected[0].score


class TestMeters:
    def test_energy_meter_accumulates_and_is_recorded(self, config, bundle):
        engine = make_engine(config, bundle, joe_scenario(10))
        engine.run(10)
        assert engine.meters["energy"] > 0
        last = engine.repository.records[-1]
        assert "meter_energy" in last.values
