#!/usr/bin/env python3
"""Generate a behavior trace, mine it, and show the recommendation lifecycle.

Simulates 2000 minutes in which Joe's bedroom light tracks his presence with
5% noise, mines the repository, prints the recommendations, then rejects the
top one and shows that the raised threshold keeps it from coming back.
"""

import datetime as dt
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from hearth.admin import load_policy
from hearth.engine import run_scenario
from hearth.learning import RuleMiner
from hearth.model import load_home_config
from hearth.scenario import Scenario, ScenarioEvent
from hearth.stateflow import replay_repository

DEMO = Path(__file__).resolve().parent.parent / "demo"


def behavior_scenario(ticks=2000, noise=0.05, seed=42) -> Scenario:
    rng = random.Random(seed)
    events = [ScenarioEvent(0, "ambient", {"quantity": "Temperature", "value": 25})]
    present, light = False, "OFF"
    for t in range(ticks):
        if t % 50 == 0:
            present = rng.random() < 0.5
            events.append(ScenarioEvent(t, "presence", {
                "resident": "Joe", "location": "BedRoom" if present else None}))
        want = "ON" if present else "OFF"
        if rng.random() < noise:
            want = "OFF" if want == "ON" else "ON"
        if want != light:
            light = want
            events.append(ScenarioEvent(t, "device", {
                "device": "light_bedroom", "value": light}))
    return Scenario(seed=seed, start=dt.datetime(2025, 6, 16, 7, 0),
                    tick_seconds=60, duration_ticks=ticks,
                    events=tuple(sorted(events, key=lambda e: e.at_tick)))


def main():
    config = load_home_config(DEMO / "home.json")
    bundle = load_policy(DEMO / "policy.json")
    out = Path("runs/mining")
    print("simulating 2000 minutes of observed behavior ...")
    run_scenario(config, "", bundle, behavior_scenario(), out_dir=out)
    records, corrupt = replay_repository(out / "repository.ndjson")
    print(f"replayed {len(records)} snapshots ({corrupt} corrupt lines skipped)\n")

    miner = RuleMiner(config)
    miner.ingest(records)
    recs = miner.recommend()
    print("recommendations:")
    for rec in recs:
        print(f"  score={rec.score:.3f} support={rec.support:<5} {rec.rule_text}")

    target = max(recs, key=lambda r: r.score)
    print(f"\nrejecting: {target.rule_text}")
    updated = miner.reject(target.id)
    print(f"pattern threshold raised to {updated.threshold:.3f}")
    survivors = [r.rule_text for r in miner.recommend() if r.status == "Proposed"]
    print("still proposed after the rejection:")
    for text in survivors:
        print(f"  {text}")


if __name__ == "__main__":
    main()
