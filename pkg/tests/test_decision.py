import itertools

import pytest
from hypothesis import given, settings, strategies as st

from gencons.config import preset
from gencons.core import NIL, StateTable, Written
from gencons.decision import (
    ANY,
    NONE,
    UNDETERMINED,
    ConflictingDecisions,
    DecisionTable,
    apply_read,
    choose_value,
    decided,
    derive_decision_table,
    initial_knowledge,
    legal_transition,
    may_write,
    maybe,
    output_value,
    parse_decision_state,
)
from gencons.oracle import global_decision, refinement_failures

PAXOS3 = preset("paxos-majority", 3, 2)
FAST4 = preset("fast-3of4", 4, 2)
MIXED4 = preset("fast-3of4(1)", 4, 2)


def read_all(cfg, cells, inp="Z"):
    k = initial_knowledge(cfg, inp)
    for r, s, obs in cells:
        k = apply_read(k, r, s, obs)
    return k


def states(k):
    return {(f"R{r}", "".join(str(s) for s in sorted(q))): str(st) for r, q, st in k.decision_table.items()}


# -- small worked cases ------------------------------------------------------


def test_initial_table_is_all_any():
    dt = DecisionTable.initial(PAXOS3)
    assert set(dt.rows[0]) == {ANY} and dt.horizon == 0
    assert dt.row(5) == (ANY,) * 3


def test_value_in_classic_row_constrains_every_quorum():
    k = read_all(PAXOS3, [(0, 2, Written("A"))])
    assert states(k) == {("R0", "01"): "Maybe A", ("R0", "02"): "Maybe A", ("R0", "12"): "Maybe A"}


def test_nil_only_closes_quorums_containing_the_server():
    k = read_all(PAXOS3, [(0, 2, NIL)])
    assert states(k) == {("R0", "01"): "Any", ("R0", "02"): "None", ("R0", "12"): "None"}


def test_higher_write_constrains_lower_rows():
    k = read_all(PAXOS3, [(1, 0, Written("B"))])
    assert set(k.decision_table.rows[0]) == {maybe("B")}
    k = apply_read(k, 0, 1, Written("A"))
    assert states(k)[("R0", "01")] == "None"


def test_fast_row_only_touches_quorums_containing_the_reader():
    k = read_all(FAST4, [(0, 3, Written("A"))])
    assert states(k)[("R0", "012")] == "Any"
    assert states(k)[("R0", "123")] == "Maybe A"


def test_decided_and_output():
    k = read_all(PAXOS3, [(0, 0, Written("A")), (0, 1, Written("A"))])
    assert k.decision_table.state(0, {0, 1}) == decided("A")
    assert output_value(k) == "A"


def test_conflicting_decisions_detected():
    cfg = preset("disjoint-pairs", 4, 2)
    k = read_all(cfg, [(0, 0, Written("A")), (0, 1, Written("A")),
                       (0, 2, Written("B")), (0, 3, Written("B"))])
    with pytest.raises(ConflictingDecisions):
        output_value(k)


def test_rereading_a_cell_is_a_no_op():
    k = read_all(PAXOS3, [(0, 0, Written("A"))])
    assert apply_read(k, 0, 0, Written("A")) is k


# -- transitions and parsing -------------------------------------------------


ALL = [ANY, NONE, maybe("A"), maybe("B"), decided("A"), decided("B")]


@pytest.mark.parametrize("st", ALL, ids=str)
def test_parse_round_trip(st):
    assert parse_decision_state(str(st)) == st


def test_legal_transitions():
    allowed = {(a, b) for a in ALL for b in ALL if legal_transition(a, b)}
    assert (ANY, decided("B")) in allowed
    assert (maybe("A"), decided("A")) in allowed
    assert (maybe("A"), NONE) in allowed
    assert (maybe("A"), maybe("B")) not in allowed
    assert (NONE, ANY) not in allowed
    assert (decided("A"), NONE) not in allowed


# -- writing rules ----------------------------------------------------------


def test_may_write_respects_allocation_and_lower_states():
    k = initial_knowledge(PAXOS3, "A")
    assert may_write(k, 0, 0, "A")
    assert not may_write(k, 1, 0, "A")  # R0 belongs to C0
    assert not may_write(k, 0, 0, "B")  # not an input and not observed
    assert not may_write(k, 0, 2, "A")  # R0 and R1 still Any
    k = read_all(PAXOS3, [(0, 0, NIL), (0, 1, NIL), (1, 0, NIL), (1, 1, NIL),
                          (1, 2, NIL)], "A")
    assert may_write(k, 0, 2, "A")
    assert not may_write(k.with_used(2), 0, 2, "A")


def test_may_write_follows_maybe():
    k = read_all(PAXOS3, [(0, 0, Written("B")), (0, 1, NIL)], "A")
    assert not may_write(k, 1, 1, "A")
    k = apply_read(k, 0, 2, NIL)  # {S0,S1}, {S0,S2} hold nil; {S1,S2} too
    assert may_write(k, 1, 1, "A")


def test_choose_value():
    k = initial_knowledge(PAXOS3, "A")
    assert choose_value(k, 0) == "A"
    assert choose_value(k, 1) is UNDETERMINED
    k = read_all(PAXOS3, [(0, 1, Written("B")), (0, 2, NIL)], "A")
    assert choose_value(k, 1) == "B"


# -- incremental rules against batch derivation and the oracle -------------


@st.composite
def read_sequences(draw, cfg, rows=3, values=("A", "B")):
    cells = draw(st.lists(
        st.tuples(st.integers(0, rows - 1), st.integers(0, cfg.servers - 1)),
        unique=True, max_size=rows * cfg.servers,
    ))
    obs = st.sampled_from([NIL, *map(Written, values)])
    return [(r, s, draw(obs)) for r, s in cells]


@pytest.mark.parametrize("cfg", [PAXOS3, FAST4, MIXED4], ids=str)
@given(data=st.data())
def test_incremental_matches_batch(cfg, data):
    cells = data.draw(read_sequences(cfg))
    k = initial_knowledge(cfg, "Z")
    for r, s, obs in cells:
        k = apply_read(k, r, s, obs)
        dt = k.decision_table
        assert dt == derive_decision_table(cfg, k.state_table, dt.horizon)


# With two values a table can hold a write no run could make (B above a
# quorum decided on A); a single value keeps every table reachable.


@pytest.mark.parametrize("cfg", [PAXOS3, FAST4, MIXED4], ids=str)
@given(data=st.data())
def test_transitions_are_legal(cfg, data):
    k = initial_knowledge(cfg, "Z")
    for r, s, obs in data.draw(read_sequences(cfg, values=("A",))):
        prev = k.decision_table
        k = apply_read(k, r, s, obs)
        dt = k.decision_table
        for rr, q, old in prev.items():
            assert legal_transition(old, dt.state(rr, q)), (rr, q, old, dt.state(rr, q))


@pytest.mark.parametrize("cfg", [PAXOS3, FAST4], ids=str)
@given(data=st.data())
def test_order_of_reads_is_irrelevant(cfg, data):
    cells = data.draw(read_sequences(cfg))
    shuffled = data.draw(st.permutations(cells))
    a, b = read_all(cfg, cells), read_all(cfg, shuffled)
    h = max(a.decision_table.horizon, b.decision_table.horizon)
    assert a.decision_table.extended(h) == b.decision_table.extended(h)


@pytest.mark.parametrize("cfg", [PAXOS3, MIXED4], ids=str)
@given(data=st.data())
def test_client_view_refines_global_truth(cfg, data):
    cells = data.draw(read_sequences(cfg, rows=2, values=("A",)))
    seen = data.draw(st.lists(st.sampled_from(cells), unique=True) if cells else st.just([]))
    truth_table = StateTable({(r, s): v for r, s, v in cells})
    k = read_all(cfg, seen)
    truth = global_decision(cfg, truth_table, k.decision_table.horizon)
    assert not list(refinement_failures(k.decision_table, truth))


@pytest.mark.parametrize("cfg", [PAXOS3, MIXED4], ids=str)
@settings(max_examples=30)
@given(data=st.data())
def test_every_permutation_folds_to_batch(cfg, data):
    cells = data.draw(read_sequences(cfg).filter(lambda c: len(c) <= 5))
    t = read_all(cfg, cells).state_table
    want = derive_decision_table(cfg, t, 2)
    for order in itertools.permutations(cells):
        assert read_all(cfg, order).decision_table.extended(2) == want
