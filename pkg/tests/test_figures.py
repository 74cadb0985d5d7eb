from dataclasses import replace

import pytest

from gencons.figures import FIXTURES, check_fixture, render_fixture, replay_fixture


@pytest.mark.parametrize("name", list(FIXTURES))
def test_fixture_reproduced(name):
    res = check_fixture(FIXTURES[name])
    assert res.passed, res.problems


def test_wrong_expectation_is_reported():
    f = FIXTURES["single-quorum-3"]
    bad = replace(f, decisions=(("R0", "{S0,S1}", "None"), ("R1", "{S2,S3}", "Maybe B")))
    res = check_fixture(bad)
    assert not res.passed and "decision table" in res.problems[0]
    bad = replace(f, state=("A . . .", ". . . B"))
    assert "state table" in check_fixture(bad).problems[0]


def test_fixture_series_are_monotone():
    # each step of a series extends the previous one's reads
    for series in ("single-quorum", "disjoint"):
        prev = None
        for i in range(4):
            k = replay_fixture(FIXTURES[f"{series}-{i}"])
            if prev is not None:
                assert prev.state_table.issubset(k.state_table)
            prev = k


def test_render_shows_tables():
    out = render_fixture(FIXTURES["fast-split"])
    assert out.startswith("fast-split:")
    assert "Decision state" in out and "Maybe B" in out
    lines = out.splitlines()
    assert any(ln.split()[:1] == ["R0"] and "A" in ln.split() for ln in lines)
