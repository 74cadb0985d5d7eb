from pathlib import Path

from hypothesis import given, strategies as st

from gencons.config import preset
from gencons.core import NIL, StateTable, Written
from gencons.decision import ANY, NONE, decided, maybe
from gencons.oracle import (
    assert_agreement,
    assert_nontriviality,
    decided_values,
    global_decision,
    quorum_state,
    refines,
)
from gencons.sim import Trace

GOLDEN = Path(__file__).parent / "golden"
COLOCATED = preset("colocated(1)", 3, 3)
PAXOS3 = preset("paxos-majority", 3, 2)


def decided_cells(cfg, t):
    return {(r, tuple(sorted(q))): st.value
            for r, q, st in global_decision(cfg, t).items() if st == decided(st.value)}


def test_value_decided_late():
    t = StateTable.from_rows([["A", "nil", "B"], ["nil", "nil", "nil"], ["B", "A", "A"]])
    assert decided_cells(COLOCATED, t) == {(2, (1, 2)): "A"}


def test_value_decided_twice():
    t = StateTable.from_rows([["A", "A", "A"], ["A", "A", "."]])
    assert decided_cells(COLOCATED, t) == {(0, (0, 1, 2)): "A", (1, (0, 1)): "A"}


def test_nothing_decided_yet():
    t = StateTable.from_rows([["A", "nil", "A"], ["A", "C", "nil"], [".", "C", "B"]])
    assert decided_cells(COLOCATED, t) == {}


def test_empty_table_is_all_any():
    for cfg in (PAXOS3, preset("fast-3of4", 4, 2), COLOCATED):
        assert {st for *_, st in global_decision(cfg, StateTable(), 3).items()} == {ANY}


def test_quorum_states():
    t = StateTable.from_rows([["A", ".", "nil"]])
    assert quorum_state(PAXOS3, t, 0, {0, 1}) == maybe("A")
    assert quorum_state(PAXOS3, t, 0, {1, 2}) == NONE
    t = StateTable.from_rows([["A", ".", "."], ["B", ".", "."]])
    # A in R0 cannot complete: B was written above it
    assert quorum_state(PAXOS3, t, 0, {0, 1}) == NONE
    assert quorum_state(PAXOS3, t, 0, {1, 2}) == NONE  # the row already holds A


def test_fast_row_keeps_any_for_untouched_quorum():
    cfg = preset("fast-3of4", 4, 2)
    t = StateTable.from_rows([[".", ".", ".", "A"]])
    assert quorum_state(cfg, t, 0, {0, 1, 2}) == ANY
    assert quorum_state(cfg, t, 0, {1, 2, 3}) == maybe("A")


def test_refines():
    assert refines(ANY, NONE)
    assert refines(maybe("A"), decided("A")) and refines(maybe("A"), NONE)
    assert not refines(maybe("A"), decided("B"))
    assert not refines(NONE, ANY)
    assert refines(decided("A"), decided("A")) and not refines(decided("A"), NONE)


def test_decided_values():
    cfg = preset("disjoint-pairs", 4, 2)
    t = StateTable.from_rows([["A", "A", "B", "B"]])
    assert set(decided_values(cfg, t)) == {"A", "B"}


@given(st.dictionaries(st.tuples(st.integers(0, 2), st.integers(0, 2)),
                       st.sampled_from([NIL, Written("A"), Written("B")]), max_size=9))
def test_decided_quorum_iff_all_members_hold_value(cells):
    t = StateTable(cells)
    for r, q, ds in global_decision(PAXOS3, t).items():
        full = {t.get(r, s) for s in q}
        assert (ds.kind.name == "DECIDED") == (len(full) == 1 and isinstance(next(iter(full)), Written))


# -- trace verdicts ----------------------------------------------------------


HEADER = [
    "trace gencons",
    "config paxos-majority servers=3 clients=2",
    "client C0 input=A start=0 first_set=0",
    "client C1 input=B start=0 first_set=0",
]


def trace(*events):
    entries = "\n".join(events)
    return Trace.parse("\n".join(f"# {h}" for h in HEADER) + "\n" + entries + "\n")


def test_golden_traces_pass():
    for p in sorted(GOLDEN.glob("*.trace")):
        t = Trace.parse(p.read_text())
        assert assert_agreement(t), p.name
        assert assert_nontriviality(t), p.name


def test_conflicting_outputs_fail():
    t = trace("5 P2b S0->C0 r=0 v=A", "  output C0 A", "6 P2b S1->C1 r=1 v=B", "  output C1 B")
    v = assert_agreement(t)
    assert not v and "conflicting outputs" in v.detail
    assert v.prefix[-1] == "  output C1 B"


def test_two_decided_quorums_fail_with_config():
    t = trace("1 P2a C0->S0 r=0 v=A", "  set S0 R0=A", "1 P2a C0->S1 r=0 v=A", "  set S1 R0=A",
              "2 P2a C1->S1 r=1 v=B", "  set S1 R1=B", "2 P2a C1->S2 r=1 v=B", "  set S2 R1=B")
    assert assert_agreement(t)  # nobody output anything
    v = assert_agreement(t, PAXOS3)
    assert not v and "several values decided" in v.detail


def test_fabricated_value_fails_nontriviality():
    t = trace("1 P2a C0->S0 r=0 v=Q", "  set S0 R0=Q")
    v = assert_nontriviality(t)
    assert not v and "Q" in v.detail
    t = trace("1 P2b S0->C0 r=0 v=A", "  output C0 Q")
    assert not assert_nontriviality(t)


def test_initial_columns_count_as_inputs():
    t = Trace.parse("# client C0 input=A start=0 first_set=0\n# column S0 nil,B\n"
                    "3 P1b S0->C0 r=2 regs={1:B}\n  output C0 B\n")
    assert assert_nontriviality(t)
