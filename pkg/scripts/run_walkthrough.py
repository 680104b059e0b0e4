#!/usr/bin/env python3
"""Run the morning-cooling walkthrough and print the temperature trajectory.

Joe is home on a summer weekday morning with the ambient at 30 C; the script
holds his room between 21 and 23. Watch the shutters close first, the AC
join with a set point of 22, and the room settle inside the band.
"""

import datetime as dt
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from hearth.admin import load_policy
from hearth.engine import Engine
from hearth.model import load_home_config
from hearth.scenario import Scenario, ScenarioEvent

DEMO = Path(__file__).resolve().parent.parent / "demo"

RULE = ("IF (Joe IN HOME AND SUMMER AND MORNING) THEN "
        "KEEP Joe ROOM_TEMPERATURE KEEP BETWEEN 21 23")


def main():
    config = load_home_config(DEMO / "home.json")
    bundle = load_policy(DEMO / "policy.json")
    scenario = Scenario(
        seed=3, start=dt.datetime(2025, 6, 16, 7, 0), tick_seconds=60,
        duration_ticks=45,
        events=(
            ScenarioEvent(0, "ambient", {"quantity": "Temperature", "value": 30}),
            ScenarioEvent(0, "presence", {"resident": "Joe", "location": "BedRoom"}),
        ))
    engine = Engine(config, bundle, script_text=RULE, scenario=scenario,
                    deterministic_keys=True)
    print(f"{'min':>4} {'bedroom C':>10}  commands")
    for minute in range(45):
        trace = engine.tick()
        temp = engine.physics.value("BedRoom", "Temperature")
        commands = "; ".join(
            f"{c['device']}<-{c.get('setpoint', c.get('band', c.get('switch')))}"
            for c in trace.commands) or ""
        marker = " *in band*" if 21 <= temp <= 23 else ""
        print(f"{minute:>4} {temp:>10.2f}  {commands}{marker}")
    print("\nfinal device states:", engine.fleet.states())


if __name__ == "__main__":
    main()
