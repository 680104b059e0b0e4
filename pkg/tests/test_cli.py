import json

from click.testing import CliRunner

from hearth.cli import main

from conftest import DEMO


def test_rule_lint_clean_script():
    runner = CliRunner()
    result = runner.invoke(main, ["rule", "lint", str(DEMO / "script.rules"),
                                  "--config", str(DEMO / "home.json")])
    assert result.exit_code == 0
    assert "no diagnostics" in result.output


def test_rule_lint_nonzero_on_diagnostics(tmp_path):
    bad = tmp_path / "bad.rules"
    bad.write_text("IF Always THEN KEEP Home Temperature BETWEEN 21 90\n")
    runner = CliRunner()
    result = runner.invoke(main, ["rule", "lint", str(bad),
                                  "--config", str(DEMO / "home.json")])
    assert result.exit_code == 1
    assert "OutOfDomain" in result.output


def test_rule_lint_parse_error(tmp_path):
    bad = tmp_path / "bad.rules"
    bad.write_text("IF Bogus THEN nothing\n")
    runner = CliRunner()
    result = runner.invoke(main, ["rule", "lint", str(bad),
                                  "--config", str(DEMO / "home.json")])
    assert result.exit_code == 1


def test_run_and_learn_round_trip(tmp_path):
    runner = CliRunner()
    out = tmp_path / "run"
    result = runner.invoke(main, [
        "run", "--config", str(DEMO / "home.json"),
        "--script", str(DEMO / "script.rules"),
        "--policy", str(DEMO / "policy.json"),
        "--scenario", str(DEMO / "scenario.json"),
        "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["ticks"] == 90
    assert (out / "repository.ndjson").exists()

    state_file = tmp_path / "learn_state.json"
    result = runner.invoke(main, [
        "learn", "recommend", "--repo", str(out / "repository.ndjson"),
        "--config", str(DEMO / "home.json"),
        "--threshold", "0.8", "--support", "10",
        "--state-file", str(state_file)])
    assert result.exit_code == 0, result.output
    recs = json.loads(result.output)
    assert state_file.exists()

    result = runner.invoke(main, [
        "learn", "estimate", "--repo", str(out / "repository.ndjson"),
        "--config", str(DEMO / "home.json")])
    assert result.exit_code == 0
    summary = json.loads(result.output)
    assert summary["records"] == 90

    if recs:  # reject the first and confirm the threshold persisted
        rec_id = recs[0]["id"]
        result = runner.invoke(main, [
            "learn", "reject", rec_id,
            "--repo", str(out / "repository.ndjson"),
            "--config", str(DEMO / "home.json"),
            "--threshold", "0.8", "--support", "10",
            "--state-file", str(state_file)])
        assert result.exit_code == 0, result.output
        saved = json.loads(state_file.read_text())
        assert any(t > 0.8 for t in saved["thresholds"].values())
