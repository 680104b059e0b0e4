import dataclasses
import datetime as dt
import json
from pathlib import Path

import pytest

from hearth.stateflow import (
    ConcreteState, Discretizer, EventRecord, GenericState, Repository,
    SchemaMismatch, SensorReading, SensorStateManager, UnknownResident,
    UnknownSensor, build_concrete_state, build_generic_state, event_schema,
    replay_repository, snapshot_event,
)

MONDAY_7AM = dt.datetime(2025, 6, 16, 7, 0)


def reading(sensor, value, t):
    return SensorReading(sensor, value, "celsius", t)


class TestSensorLayer:
    def test_ingest_and_latest(self, config):
        mgr = SensorStateManager(config)
        mgr.ingest_reading(reading("temp_bedroom", 25.0, 100))
        assert mgr.latest["temp_bedroom"].value == 25.0

    def test_out_of_order_discarded(self, config):
        mgr = SensorStateManager(config)
        mgr.ingest_reading(reading("temp_bedroom", 25.0, 100))
        mgr.ingest_reading(reading("temp_bedroom", 24.0, 90))
        assert mgr.latest["temp_bedroom"].value == 25.0
        assert mgr.discarded == 1

    def test_unknown_sensor(self, config):
        with pytest.raises(UnknownSensor):
            SensorStateManager(config).ingest_reading(reading("ghost", 1.0, 0))


class TestConcreteState:
    def test_same_room_sensors_average(self, config):
        mgr = SensorStateManager(config)
        mgr.ingest_reading(reading("temp_kitchen_a", 24.0, 100))
        mgr.ingest_reading(reading("temp_kitchen_b", 26.0, 100))
        concrete = build_concrete_state(mgr, config, clock=100)
        assert concrete.rooms["Kitchen"]["Temperature"].value == 25.0

    def test_missing_quantity_unknown(self, config):
        concrete = build_concrete_state(SensorStateManager(config), config, clock=0)
        assert concrete.rooms["Kitchen"]["Humidity"].value is None
        assert not concrete.rooms["Kitchen"]["Humidity"].known

    def test_staleness_is_clock_minus_reading(self, config):
        mgr = SensorStateManager(config)
        mgr.ingest_reading(reading("temp_bedroom", 25.0, 100))
        concrete = build_concrete_state(mgr, config, clock=160)
        assert concrete.rooms["BedRoom"]["Temperature"].staleness == 60

    def test_stale_reading_goes_unknown(self, config):
        mgr = SensorStateManager(config)
        mgr.ingest_reading(reading("temp_bedroom", 25.0, 0))
        concrete = build_concrete_state(mgr, config, clock=500)
        assert concrete.rooms["BedRoom"]["Temperature"].value is None


class TestGenericState:
    def test_presence_period_daytype(self, config):
        concrete = build_concrete_state(SensorStateManager(config), config, 0)
        state = build_generic_state(concrete, {"Joe": "BedRoom"}, {},
                                    MONDAY_7AM, config)
        assert state.presence["Joe"] == "BedRoom"
        assert state.time.period == "Morning"
        assert state.time.day_type == "weekday"
        assert state.time.season == "Summer"

    def test_late_night_period(self, config):
        concrete = build_concrete_state(SensorStateManager(config), config, 0)
        state = build_generic_state(concrete, {}, {},
                                    dt.datetime(2025, 6, 16, 23, 30), config)
        assert state.time.period == "Night"

    def test_activity_of_absent_resident_dropped(self, config):
        concrete = build_concrete_state(SensorStateManager(config), config, 0)
        diags = []
        state = build_generic_state(concrete, {}, {"Joe": "Sleeping"},
                                    MONDAY_7AM, config, diagnostics=diags)
        assert state.activity["Joe"] is None
        assert diags

    def test_unknown_resident_rejected(self, config):
        concrete = build_concrete_state(SensorStateManager(config), config, 0)
        with pytest.raises(UnknownResident):
            build_generic_state(concrete, {"Nobody": "Kitchen"}, {},
                                MONDAY_7AM, config)

    def test_deterministic(self, config):
        concrete = build_concrete_state(SensorStateManager(config), config, 0)
        a = build_generic_state(concrete, {"Joe": "BedRoom"}, {}, MONDAY_7AM, config)
        b = build_generic_state(concrete, {"Joe": "BedRoom"}, {}, MONDAY_7AM, config)
        assert a.presence == b.presence and a.time.clock == b.time.clock


class TestLayerIgnorance:
    def test_sensor_layer_has_no_rooms_or_residents(self):
        fields = {f.name for f in dataclasses.fields(SensorReading)}
        assert fields == {"sensor_id", "value", "units", "timestamp"}

    def test_concrete_layer_has_no_residents(self):
        fields = {f.name for f in dataclasses.fields(ConcreteState)}
        assert "presence" not in fields and "activity" not in fields

    def test_only_generic_layer_knows_presence(self):
        fields = {f.name for f in dataclasses.fields(GenericState)}
        assert {"presence", "activity"} <= fields


class TestDiscretizerAndSnapshots:
    def test_five_equal_bins(self, config):
        disc = Discretizer(config)
        # TemperatureKEEP domain [0, 40]: [0,8) [8,16) [16,24) [24,32) [32,40]
        assert disc.bin_label("Temperature", 25.0) == "b3"
        assert disc.bin_label("Temperature", 0.0) == "b0"
        assert disc.bin_label("Temperature", 40.0) == "b4"
        assert disc.bin_label("Temperature", None) == "unknown"
        assert disc.bin_edges("Temperature", "b3") == (24.0, 32.0)

    def _snapshot(self, config, presence, actuators, t=0.0):
        mgr = SensorStateManager(config)
        mgr.ingest_reading(reading("temp_bedroom", 25.0, t))
        concrete = build_concrete_state(mgr, config, t)
        generic = build_generic_state(concrete, presence, {}, MONDAY_7AM, config)
        return snapshot_event(generic, concrete, actuators, Discretizer(config),
                              config, timestamp=t)

    def test_presence_projection_and_bins(self, config):
        record = self._snapshot(config, {"Joe": "BedRoom"}, {"ac_bedroom": "on"})
        assert record.values["Joe_IN_Home"] == "true"
        assert record.values["Joe_IN_BedRoom"] == "true"
        assert record.values["Joe_IN_Kitchen"] == "false"
        assert record.values["Temperature_BedRoom"] == "b3"
        assert record.values["ac_bedroom"] == "on"

    def test_fixed_schema(self, config):
        a = self._snapshot(config, {"Joe": "BedRoom"}, {})
        b = self._snapshot(config, {}, {"light_kitchen": "on"})
        schema_vars = set(event_schema(config))
        assert schema_vars <= set(a.values) and schema_vars <= set(b.values)
        assert {k for k in a.values if not k.startswith("meter_")} == \
               {k for k in b.values if not k.startswith("meter_")}

    def test_bad_actuator_state_rejected(self, config):
        with pytest.raises(SchemaMismatch):
            self._snapshot(config, {}, {"doors_livingroom": "ajar"})


class TestRepository:
    def test_append_only_and_monotonic(self, tmp_path, config):
        repo = Repository(tmp_path / "repo.ndjson")
        r1 = EventRecord(0.0, {"a": "1"})
        r2 = EventRecord(60.0, {"a": "2"})
        repo.append(r1)
        repo.append(r2)
        with pytest.raises(SchemaMismatch):
            repo.append(EventRecord(60.0, {"a": "3"}))
        lines = (tmp_path / "repo.ndjson").read_text().splitlines()
        assert len(lines) == 2

    def test_replay_round_trip(self, tmp_path):
        repo = Repository(tmp_path / "repo.ndjson")
        for i in range(5):
            repo.append(EventRecord(float(i), {"x": str(i)}))
        records, corrupt = replay_repository(tmp_path / "repo.ndjson")
        assert corrupt == 0 and [r.values["x"] for r in records] == list("01234")

    def test_one_corrupt_line_in_many_is_skipped(self, tmp_path):
        path = tmp_path / "repo.ndjson"
        lines = [EventRecord(float(i), {"x": "1"}).to_json() for i in range(999)]
        lines.insert(500, "{not json")
        path.write_text("\n".join(lines) + "\n")
        records, corrupt = replay_repository(path)
        assert len(records) == 999 and corrupt == 1

    def test_heavy_corruption_is_fatal(self, tmp_path):
        path = tmp_path / "repo.ndjson"
        good = [EventRecord(float(i), {"x": "1"}).to_json() for i in range(95)]
        path.write_text("\n".join(good + ["broken"] * 5) + "\n")
        with pytest.raises(SchemaMismatch):
            replay_repository(path)
