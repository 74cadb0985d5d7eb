"""Worked examples: scripted reads with their expected client tables.

Each fixture names a configuration, a sequence of observations (raw register
reads or server replies) and the state and decision tables a client should
hold afterwards, typed in by hand.  ``replay_fixture`` runs the reads through
the incremental rules and ``check_fixture`` compares the result, cell for
cell, against the expected tables and against a batch recomputation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from gencons.config import Configuration, format_quorum, preset
from gencons.core import NIL, UNWRITTEN, RegisterState, StateTable, Written, format_state
from gencons.decision import (
    ClientKnowledge,
    DecisionTable,
    Kind,
    apply_read,
    derive_decision_table,
    initial_knowledge,
)
from gencons.protocol import P1b, P2b, learn


@dataclass(frozen=True)
class Read:
    r: int
    s: int
    obs: RegisterState


@dataclass(frozen=True)
class Reply:
    s: int
    msg: P1b | P2b


Event = Read | Reply


@dataclass(frozen=True)
class Fixture:
    name: str
    config: str  # preset spec
    servers: int
    events: tuple[Event, ...]
    state: tuple[str, ...]  # expected rows, cells separated by spaces, "." unwritten
    decisions: tuple[tuple[str, str, str], ...]  # (register, quorum, state)
    caption: str = ""
    decided_only: bool = False  # expected list holds only the Decided quorums
    clients: int = 2

    def configuration(self) -> Configuration:
        return preset(self.config, self.servers, self.clients)


def _reads(*cells: tuple[int, int, str]) -> tuple[Read, ...]:
    out = []
    for r, s, text in cells:
        out.append(Read(r, s, NIL if text == "nil" else Written(text)))
    return tuple(out)


def _rows_reads(rows: list[str]) -> tuple[Read, ...]:
    cells = []
    for r, row in enumerate(rows):
        for s, text in enumerate(row.split()):
            if text != ".":
                cells.append((r, s, text))
    return _reads(*cells)


def _whole_table(name, rows, decided, caption) -> Fixture:
    return Fixture(name, "colocated(1)", 3, _rows_reads(rows), tuple(rows),
                   tuple(decided), caption, decided_only=True)


_Q01, _Q02, _Q12, _Q23 = "{S0,S1}", "{S0,S2}", "{S1,S2}", "{S2,S3}"
_T012, _T013, _T023, _T123 = "{S0,S1,S2}", "{S0,S1,S3}", "{S0,S2,S3}", "{S1,S2,S3}"

FIXTURES: dict[str, Fixture] = {}


def _add(f: Fixture) -> None:
    FIXTURES[f.name] = f


# whole state tables over the co-located layout, judged on decided quorums
_add(_whole_table("colocated-late", ["A nil B", "nil nil nil", "B A A"],
                  [("R2", _Q12, "Decided A")], "A decided by R2"))
_add(_whole_table("colocated-twice", ["A A A", "A A ."],
                  [("R0", _T012, "Decided A"), ("R1", _Q01, "Decided A")],
                  "A decided by R0 and R1"))
_add(_whole_table("colocated-open", ["A nil A", "A C nil", ". C B"], [],
                  "no decisions yet"))

# one quorum per set, alternating halves of four servers
_SQ = [
    (_reads(), [". . . ."], [("R0", _Q01, "Any")], "initial state"),
    (_reads((1, 3, "B")), [". . . .", ". . . B"],
     [("R0", _Q01, "Maybe B"), ("R1", _Q23, "Maybe B")], "after reading B from R1 on S3"),
    (_reads((1, 3, "B"), (0, 0, "A")), ["A . . .", ". . . B"],
     [("R0", _Q01, "None"), ("R1", _Q23, "Maybe B")], "after reading A from R0 on S0"),
    (_reads((1, 3, "B"), (0, 0, "A"), (1, 2, "B")), ["A . . .", ". . B B"],
     [("R0", _Q01, "None"), ("R1", _Q23, "Decided B")], "after reading B from R1 on S2"),
]
for _i, (_ev, _rows, _dec, _cap) in enumerate(_SQ):
    _add(Fixture(f"single-quorum-{_i}", "single-quorum-pairs", 4, _ev, tuple(_rows),
                 tuple(_dec), _cap))

# two disjoint client-restricted quorums in every set
_DP = [
    (_reads(), [". . . ."], [("R0", _Q01, "Any"), ("R0", _Q23, "Any")], "initial state"),
    (_reads((0, 0, "nil")), ["nil . . ."],
     [("R0", _Q01, "None"), ("R0", _Q23, "Any")], "after reading nil from R0 on S0"),
    (_reads((0, 0, "nil"), (0, 3, "nil"), (1, 3, "B")), ["nil . . nil", ". . . B"],
     [("R0", _Q01, "None"), ("R0", _Q23, "None"),
      ("R1", _Q01, "Maybe B"), ("R1", _Q23, "Maybe B")],
     "after reading nil from R0 and B from R1 on S3"),
    (_reads((0, 0, "nil"), (0, 3, "nil"), (1, 3, "B"), (1, 2, "B")),
     ["nil . . nil", ". . B B"],
     [("R0", _Q01, "None"), ("R0", _Q23, "None"),
      ("R1", _Q01, "Maybe B"), ("R1", _Q23, "Decided B")],
     "after reading B from R1 on S2"),
]
for _i, (_ev, _rows, _dec, _cap) in enumerate(_DP):
    _add(Fixture(f"disjoint-{_i}", "disjoint-pairs", 4, _ev, tuple(_rows),
                 tuple(_dec), _cap))

# majority Paxos, first client writing A at set 0
_add(Fixture("paxos-first-0", "paxos-majority", 3, (Reply(1, P1b(0, ())),), (". . .",),
             (("R0", _Q01, "Any"), ("R0", _Q02, "Any"), ("R0", _Q12, "Any")),
             "initial state, unchanged after P1b(0,{}) from S1"))
_add(Fixture("paxos-first-1", "paxos-majority", 3,
             (Reply(1, P1b(0, ())), Reply(0, P2b(0, "A")), Reply(1, P2b(0, "A"))),
             ("A A .",),
             (("R0", _Q01, "Decided A"), ("R0", _Q02, "Maybe A"), ("R0", _Q12, "Maybe A")),
             "after P2b(0,A) from S1"))

# majority Paxos, second client running phase one at set 1
_A0 = ((0, Written("A")),)
_add(Fixture("paxos-second-0", "paxos-majority", 3, (Reply(0, P1b(1, _A0)),), ("A . .",),
             (("R0", _Q01, "Maybe A"), ("R0", _Q02, "Maybe A"), ("R0", _Q12, "Maybe A")),
             "after P1b(1,{R0:A}) from S0"))
_add(Fixture("paxos-second-1", "paxos-majority", 3,
             (Reply(0, P1b(1, _A0)), Reply(1, P1b(1, _A0))), ("A A .",),
             (("R0", _Q01, "Decided A"), ("R0", _Q02, "Maybe A"), ("R0", _Q12, "Maybe A")),
             "after P1b(1,{R0:A}) from S1"))

# fast three-of-four quorums
_add(Fixture("fast-two-nils", "fast-3of4", 4, _reads((0, 0, "nil"), (0, 1, "nil")),
             ("nil nil . .",),
             (("R0", _T012, "None"), ("R0", _T013, "None"),
              ("R0", _T023, "None"), ("R0", _T123, "None")),
             "two nil reads close every quorum"))
_add(Fixture("fast-split", "fast-3of4", 4, _reads((0, 0, "A"), (0, 1, "B")),
             ("A B . .",),
             (("R0", _T012, "None"), ("R0", _T013, "None"),
              ("R0", _T023, "Maybe A"), ("R0", _T123, "Maybe B")),
             "A and B read from the same fast set"))


# -- replay and comparison --------------------------------------------------


def replay_fixture(f: Fixture) -> ClientKnowledge:
    k = initial_knowledge(f.configuration(), "Z")
    for ev in f.events:
        match ev:
            case Read(r, s, obs):
                k = apply_read(k, r, s, obs)
            case Reply(s, msg):
                k = learn(k, s, msg)
    return k


def state_rows(t: StateTable, servers: int) -> tuple[str, ...]:
    top = max(t.top, 0)
    return tuple(
        " ".join(format_state(t.get(r, s)) for s in range(servers)) for r in range(top + 1)
    )


def decision_rows(dt: DecisionTable, decided_only: bool = False):
    return tuple(
        (f"R{r}", format_quorum(q), str(st))
        for r, q, st in dt.items()
        if not decided_only or st.kind is Kind.DECIDED
    )


@dataclass
class FixtureResult:
    fixture: Fixture
    state: tuple[str, ...]
    incremental: tuple
    batch: tuple
    problems: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.problems


def check_fixture(f: Fixture) -> FixtureResult:
    k = replay_fixture(f)
    rows = state_rows(k.state_table, f.servers)
    inc = decision_rows(k.decision_table, f.decided_only)
    batch = decision_rows(
        derive_decision_table(k.cfg, k.state_table, k.decision_table.horizon), f.decided_only
    )
    res = FixtureResult(f, rows, inc, batch)
    if rows != f.state:
        res.problems.append(f"state table {list(rows)} != expected {list(f.state)}")
    if sorted(inc) != sorted(f.decisions):
        res.problems.append(f"decision table {list(inc)} != expected {list(f.decisions)}")
    if sorted(batch) != sorted(inc):
        res.problems.append("batch recomputation disagrees with incremental updates")
    return res


# -- rendering --------------------------------------------------------------


def _grid(rows: list[list[str]]) -> list[str]:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]


def render_state(t: StateTable, servers: int) -> str:
    top = max(t.top, 0)
    rows = [[""] + [f"S{s}" for s in range(servers)]]
    for r in range(top + 1):
        cells = []
        for s in range(servers):
            st = t.get(r, s)
            cells.append("." if st is UNWRITTEN else format_state(st))
        rows.append([f"R{r}"] + cells)
    return "\n".join(_grid(rows))


def render_decisions(dt: DecisionTable) -> str:
    rows = [["Register", "Quorum", "Decision state"]]
    last = None
    for r, q, st in dt.items():
        rows.append(["" if r == last else f"R{r}", format_quorum(q), str(st)])
        last = r
    return "\n".join(_grid(rows))


def render_fixture(f: Fixture) -> str:
    k = replay_fixture(f)
    head = f"{f.name}: {f.caption} ({f.config}, {f.servers} servers)"
    return "\n\n".join([head, render_state(k.state_table, f.servers),
                        render_decisions(k.decision_table)])
