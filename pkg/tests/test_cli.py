from pathlib import Path

import pytest

from gencons.cli import FAIL, OK, USAGE, main

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
SCENARIOS = ROOT / "scenarios"


def cli(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_rejects_classic_for_alternating_halves(capsys):
    code, out, _ = cli(capsys, "validate", CONFIGS / "fig1b.yaml", "--mode", "classic")
    assert code == FAIL and "counterexample" in out


def test_validate_fast(capsys):
    code, out, _ = cli(capsys, "validate", CONFIGS / "fig10a.yaml", "--mode", "fast", "--max-r", 8)
    assert code == OK and "fast: pass" in out


def test_validate_default_mode(capsys):
    code, out, _ = cli(capsys, "validate", CONFIGS / "flexible.yaml")
    assert code == OK and out.splitlines()[1].startswith("weakened")
    assert cli(capsys, "validate", CONFIGS / "flexible.yaml", "--mode", "classic")[0] == FAIL


def test_run_scenario(capsys):
    code, out, _ = cli(capsys, "run", SCENARIOS / "fig6.scenario", "--seed", "1")
    assert code == OK
    assert "# outputs C0=A C1=A" in out


def test_run_writes_trace_and_replays(capsys, tmp_path):
    trace = tmp_path / "run.trace"
    code, out, _ = cli(capsys, "run", SCENARIOS / "colocated.scenario", "--trace-out", trace)
    assert code == OK and out.startswith("outputs ")
    code, out, _ = cli(capsys, "replay", trace, CONFIGS / "paxos.yaml")
    assert code == FAIL and "DIVERGED" in out  # wrong configuration
    cfg = tmp_path / "colocated.yaml"
    cfg.write_text("preset: colocated(1)\nservers: 3\nclients: 3\n")
    code, out, _ = cli(capsys, "replay", trace, cfg)
    assert code == OK and out.startswith("replay identical")


def test_run_require_decision(capsys, tmp_path):
    sc = tmp_path / "stuck.scenario"
    sc.write_text(
        "config: {preset: paxos-majority, servers: 3, clients: 1}\n"
        "clients: {C0: A}\nplan: {crashes: {S1: 0, S2: 0}}\nhorizon: 50\n"
    )
    assert cli(capsys, "run", sc)[0] == OK
    code, out, _ = cli(capsys, "run", sc, "--require-decision")
    assert code == FAIL and "no decision" in out


def test_explore_passes_and_fails(capsys, tmp_path):
    code, out, _ = cli(capsys, "explore", CONFIGS / "paxos.yaml", "--max-attempts", "1")
    assert code == OK and "violations 0" in out
    code, out, _ = cli(capsys, "explore", CONFIGS / "paxos.yaml", "--max-attempts", "1",
                       "--mutations", "2")
    assert code == FAIL and "violation non-triviality" in out


def test_explore_budget_is_a_failure(capsys):
    code, out, _ = cli(capsys, "explore", CONFIGS / "paxos.yaml", "--max-states", "20")
    assert code == FAIL and "complete no" in out


def test_render(capsys):
    code, out, _ = cli(capsys, "render", "list")
    assert code == OK and "paxos-first-1" in out
    code, out, _ = cli(capsys, "render", "disjoint-3")
    assert code == OK and "golden match" in out
    code, out, _ = cli(capsys, "render", "all")
    assert code == OK and out.count("golden match") == 17


@pytest.mark.parametrize("args", [
    ["validate", "/no/such/file.yaml"],
    ["run", "/no/such.scenario"],
    ["render", "nope"],
    ["explore", str(CONFIGS / "paxos.yaml"), "--inputs", "A,B,C"],
    ["explore", str(CONFIGS / "paxos.yaml"), "--mutations", "9"],
    ["validate", str(CONFIGS / "paxos.yaml"), "--max-r", "99"],
    ["frobnicate"],
    [],
])
def test_usage_errors(capsys, args):
    code, _, err = cli(capsys, *args)
    assert code == USAGE and err


def test_bad_config_file(capsys, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("servers: 3\nrules: [{from: 0, tail: true, quorums: [[S9]]}]\n")
    code, _, err = cli(capsys, "validate", p)
    assert code == USAGE and "S9" in err


def test_replay_rejects_garbage(capsys, tmp_path):
    p = tmp_path / "garbage.trace"
    p.write_text("hello world\n")
    assert cli(capsys, "replay", p, CONFIGS / "paxos.yaml")[0] == USAGE
