"""Command-line front ends: `hearth` (client + batch tools) and `hearthd`.

The client subcommands mirror the gateway endpoints one to one; the batch
subcommands (run, rule lint, learn ...) work directly on files so the whole
pipeline is scriptable without a server.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from .admin import load_policy
from .dsl.parser import parse_script
from .dsl.validate import validate_script
from .engine import Engine, run_scenario
from .errors import HearthError
from .learning import RuleMiner
from .model import load_home_config
from .scenario import Scenario, load_scenario
from .stateflow import replay_repository


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _client(server: str) -> httpx.Client:
    return httpx.Client(base_url=server, timeout=10.0)


def _ticket_header(path: str | None) -> dict:
    if path is None:
        return {}
    wire = Path(path).read_text().strip()
    return {"x-ticket": wire}


def _show(response: httpx.Response) -> None:
    try:
        body = response.json()
    except ValueError:
        body = {"raw": response.text}
    click.echo(json.dumps(body, indent=2, sort_keys=True))
    if response.status_code >= 400:
        sys.exit(1)


@click.group()
def main():
    """Smart-home rule engine tools."""


# -- batch tools ---------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--script", "script_path", type=click.Path(exists=True))
@click.option("--policy", "policy_path", required=True, type=click.Path(exists=True))
@click.option("--scenario", "scenario_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default="runs/latest")
@click.option("--ticks", type=int, default=None, help="Override scenario duration.")
def run(config_path, script_path, policy_path, scenario_path, out_dir, ticks):
    """Run a scenario to completion and write the run artifacts."""
    try:
        config = load_home_config(Path(config_path))
        bundle = load_policy(Path(policy_path))
        scenario = load_scenario(Path(scenario_path), config) if scenario_path \
            else Scenario()
        script_text = Path(script_path).read_text() if script_path else ""
        engine = Engine(config, bundle, script_text=script_text, scenario=scenario,
                        out_dir=Path(out_dir), deterministic_keys=True)
        report = engine.run(ticks)
    except HearthError as exc:
        _fail(str(exc))
        return
    click.echo(json.dumps(report.to_json(), indent=2, sort_keys=True))


@main.group()
def rule():
    """Rule script tools and proposal workflow."""


@rule.command()
@click.argument("script_path", type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def lint(script_path, config_path):
    """Parse and validate a rule script; nonzero exit on any diagnostic."""
    config = load_home_config(Path(config_path))
    try:
        rules = parse_script(Path(script_path).read_text(), config.registry, config)
    except HearthError as exc:
        _fail(str(exc))
        return
    diagnostics = validate_script(rules, config)
    for diag in diagnostics:
        click.echo(f"{diag.rule_id or '-'}: {diag.code}: {diag.message}")
    if diagnostics:
        sys.exit(1)
    click.echo(f"ok: {len(rules)} rules, no diagnostics")


@rule.command()
@click.argument("rule_text")
@click.option("--owner", required=True)
@click.option("--ticket", "ticket_path", type=click.Path(exists=True))
@click.option("--server", default="http://127.0.0.1:8700")
def propose(rule_text, owner, ticket_path, server):
    """Submit a rule proposal to a running gateway."""
    wire = Path(ticket_path).read_text().strip() if ticket_path else None
    with _client(server) as client:
        _show(client.post("/rules/proposals",
                          json={"rule": rule_text, "owner": owner, "ticket": wire}))


@rule.command()
@click.option("--ticket", "ticket_path", type=click.Path(exists=True))
@click.option("--server", default="http://127.0.0.1:8700")
def pending(ticket_path, server):
    """List proposals awaiting a decision."""
    with _client(server) as client:
        _show(client.get("/rules/pending", headers=_ticket_header(ticket_path)))


@rule.command()
@click.argument("proposal_id")
@click.option("--accept/--reject", "accept", default=True)
@click.option("--ticket", "ticket_path", required=True, type=click.Path(exists=True))
@click.option("--server", default="http://127.0.0.1:8700")
def resolve(proposal_id, accept, ticket_path, server):
    """Resolve an escalated proposal."""
    wire = Path(ticket_path).read_text().strip()
    with _client(server) as client:
        _show(client.post(f"/rules/{proposal_id}/resolve",
                          json={"verdict": "accept" if accept else "reject",
                                "ticket": wire}))


@main.group()
def auth():
    """Identity and access tickets."""


@auth.command()
@click.option("--user", required=True)
@click.option("--secret", required=True)
@click.option("--out", "out_path", type=click.Path(), default="ticket.json")
@click.option("--server", default="http://127.0.0.1:8700")
def login(user, secret, out_path, server):
    """Authenticate and save the identity ticket."""
    with _client(server) as client:
        response = client.post("/auth/login", json={"user": user, "secret": secret})
        if response.status_code >= 400:
            _show(response)
            return
        body = response.json()
        Path(out_path).write_text(body["ticket"])
        click.echo(f"ticket for {body['subject']} ({body['role']}) -> {out_path}")


@auth.command()
@click.option("--ticket", "ticket_path", required=True, type=click.Path(exists=True))
@click.option("--state", required=True)
@click.option("--action", default="set", type=click.Choice(["read", "set"]))
@click.option("--value", default=None)
@click.option("--out", "out_path", type=click.Path(), default="grant.json")
@click.option("--server", default="http://127.0.0.1:8700")
def grant(ticket_path, state, action, value, out_path, server):
    """Exchange an identity ticket for a claim ticket on a state."""
    wire = Path(ticket_path).read_text().strip()
    payload = {"ticket": wire, "state": state, "action": action}
    if value is not None:
        try:
            payload["value"] = float(value)
        except ValueError:
            payload["value"] = value
    with _client(server) as client:
        response = client.post("/authorize", json=payload)
        if response.status_code >= 400:
            _show(response)
            return
        Path(out_path).write_text(response.json()["ticket"])
        click.echo(f"claim ticket -> {out_path}")


@main.command()
@click.option("--ticket", "ticket_path", required=True, type=click.Path(exists=True))
@click.option("--state", required=True)
@click.option("--room", default=None)
@click.option("--set", "set_value", default=None)
@click.option("--keep", nargs=2, type=float, default=None)
@click.option("--server", default="http://127.0.0.1:8700")
def override(ticket_path, state, room, set_value, keep, server):
    """One-off manual state change through the concrete manager's guard."""
    if (set_value is None) == (keep is None):
        _fail("choose exactly one of --set VALUE or --keep LO HI")
    directive = {"kind": "set", "value": set_value} if set_value is not None \
        else {"kind": "keep", "lo": keep[0], "hi": keep[1]}
    wire = Path(ticket_path).read_text().strip()
    with _client(server) as client:
        _show(client.post("/override", json={"ticket": wire, "state": state,
                                             "room": room, "directive": directive}))


@main.command()
@click.option("--ticket", "ticket_path", type=click.Path(exists=True))
@click.option("--server", default="http://127.0.0.1:8700")
def state(ticket_path, server):
    """Latest whole-home view (filtered by the ticket's read grants)."""
    with _client(server) as client:
        _show(client.get("/state", headers=_ticket_header(ticket_path)))


@main.command()
@click.option("--ticket", "ticket_path", type=click.Path(exists=True))
@click.option("--server", default="http://127.0.0.1:8700")
def devices(ticket_path, server):
    """Device states (read-only dashboard view)."""
    with _client(server) as client:
        _show(client.get("/devices", headers=_ticket_header(ticket_path)))


@main.command()
@click.option("--since", type=int, default=0)
@click.option("--server", default="http://127.0.0.1:8700")
def notifications(since, server):
    """Notification feed after the given sequence number."""
    with _client(server) as client:
        _show(client.get("/notifications", params={"since": since}))


@main.group()
def learn():
    """Behavior mining over a repository file."""


def _miner_for(repo_path: str, config_path: str, threshold: float, support: int,
               state_path: str | None) -> RuleMiner:
    config = load_home_config(Path(config_path))
    records, corrupt = replay_repository(Path(repo_path))
    if corrupt:
        click.echo(f"note: skipped {corrupt} corrupt lines", err=True)
    miner = RuleMiner(config, threshold=threshold, min_support=support)
    if state_path:
        miner.load_state(Path(state_path))
    miner.ingest(records)
    return miner


@learn.command()
@click.option("--repo", "repo_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def estimate(repo_path, config_path):
    """Count-table summary of the repository."""
    config = load_home_config(Path(config_path))
    records, corrupt = replay_repository(Path(repo_path))
    miner = RuleMiner(config)
    miner.ingest(records)
    summary = {
        "records": len(records),
        "corrupt": corrupt,
        "causes": len(miner.causes),
        "effects": {name: {v: miner._count({name: v}) for v in dom}
                    for name, dom in miner.effects.items()},
    }
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@learn.command()
@click.option("--repo", "repo_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", type=float, default=0.9)
@click.option("--support", type=int, default=20)
@click.option("--state-file", "state_path", type=click.Path(), default="learn_state.json")
@click.option("--out", "out_path", type=click.Path(), default=None)
def recommend(repo_path, config_path, threshold, support, state_path, out_path):
    """Emit rule recommendations whose score clears the pattern threshold."""
    miner = _miner_for(repo_path, config_path, threshold, support, state_path)
    recs = miner.recommend()
    miner.save_state(Path(state_path))
    doc = [rec.to_json() for rec in recs]
    if out_path:
        Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True))
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


@learn.command()
@click.argument("rec_id")
@click.option("--repo", "repo_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", type=float, default=0.9)
@click.option("--support", type=int, default=20)
@click.option("--state-file", "state_path", type=click.Path(), default="learn_state.json")
def reject(rec_id, repo_path, config_path, threshold, support, state_path):
    """Reject a recommendation: its pattern threshold rises above the score."""
    miner = _miner_for(repo_path, config_path, threshold, support, state_path)
    miner.recommend()
    try:
        updated = miner.reject(rec_id)
    except HearthError as exc:
        _fail(str(exc))
        return
    miner.save_state(Path(state_path))
    click.echo(json.dumps(updated.to_json(), indent=2, sort_keys=True))


# -- the daemon ------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--script", "script_path", type=click.Path(exists=True))
@click.option("--policy", "policy_path", required=True, type=click.Path(exists=True))
@click.option("--scenario", "scenario_path", type=click.Path(exists=True))
@click.option("--tick-seconds", type=int, default=60,
              help="Simulated seconds per tick.")
@click.option("--real-seconds", type=float, default=1.0,
              help="Wall seconds per tick.")
@click.option("--seed", type=int, default=0)
@click.option("--split-mode", is_flag=True,
              help="Serve the concrete half on listen-port+1.")
@click.option("--listen", default="127.0.0.1:8700")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory of built console assets to serve at /.")
def serve(config_path, script_path, policy_path, scenario_path, tick_seconds,
          real_seconds, seed, split_mode, listen, out_dir, static_dir):
    """Run the gateway service with the engine ticking in the background."""
    import uvicorn

    from .service import Gateway, HttpSeam, build_app, build_concrete_app

    config = load_home_config(Path(config_path))
    bundle = load_policy(Path(policy_path))
    if scenario_path:
        scenario = load_scenario(Path(scenario_path), config)
        scenario = Scenario(seed=seed or scenario.seed, start=scenario.start,
                            tick_seconds=tick_seconds or scenario.tick_seconds,
                            duration_ticks=scenario.duration_ticks,
                            events=scenario.events)
    else:
        scenario = Scenario(seed=seed, tick_seconds=tick_seconds)
    script_text = Path(script_path).read_text() if script_path else ""
    engine = Engine(config, bundle, script_text=script_text, scenario=scenario,
                    out_dir=Path(out_dir) if out_dir else None)
    gateway = Gateway(engine)
    host, _, port_text = listen.partition(":")
    port = int(port_text or "8700")

    if split_mode:
        concrete_app = build_concrete_app(gateway)
        concrete_config = uvicorn.Config(concrete_app, host=host, port=port + 1,
                                         log_level="warning")
        concrete_server = uvicorn.Server(concrete_config)
        import threading
        threading.Thread(target=concrete_server.run, daemon=True).start()
        engine.seam = HttpSeam(httpx.Client(
            base_url=f"http://{host}:{port + 1}", timeout=10.0))
        click.echo(f"concrete manager listening on {host}:{port + 1}")

    app = build_app(gateway, static_dir=Path(static_dir) if static_dir else None)
    gateway.start_ticking(real_seconds_per_tick=real_seconds)
    click.echo(f"gateway listening on {host}:{port}")
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        gateway.stop()


def daemon():
    """Entry point for `hearthd`: the serve command as a standalone binary."""
    serve(standalone_mode=True)


if __name__ == "__main__":
    main()
