"""Client-side decision tables.

A client keeps a partial copy of the state table and, from it, one decision
state per phase-2 quorum of each register set.  ``apply_read`` folds a single
register observation into that knowledge; ``derive_decision_table`` computes
the same table from scratch and is used to cross-check the incremental path.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field, replace
from typing import Iterator

from gencons import kernels
from gencons.config import FAST, Configuration, Quorum, format_quorum
from gencons.core import (
    NIL,
    UNWRITTEN,
    ConsensusError,
    RegisterState,
    StateTable,
    Value,
)


class ConflictingDecisions(ConsensusError):
    """Two quorums are Decided on different values: agreement is broken."""


class Kind(enum.IntEnum):
    ANY = 0
    MAYBE = 1
    DECIDED = 2
    NONE = 3


@dataclass(frozen=True, slots=True)
class DecisionState:
    kind: Kind
    value: Value | None = None

    def __str__(self) -> str:
        if self.kind is Kind.ANY:
            return "Any"
        if self.kind is Kind.NONE:
            return "None"
        word = "Maybe" if self.kind is Kind.MAYBE else "Decided"
        return f"{word} {self.value}"

    __repr__ = __str__

    @property
    def final(self) -> bool:
        return self.kind in (Kind.DECIDED, Kind.NONE)


ANY = DecisionState(Kind.ANY)
NONE = DecisionState(Kind.NONE)


# interned, so comparing decision tables mostly hits the identity fast path
@functools.cache
def maybe(v: Value) -> DecisionState:
    return DecisionState(Kind.MAYBE, v)


@functools.cache
def decided(v: Value) -> DecisionState:
    return DecisionState(Kind.DECIDED, v)


def legal_transition(old: DecisionState, new: DecisionState) -> bool:
    if old == new:
        return True
    if old.kind is Kind.ANY:
        return True
    if old.kind is Kind.MAYBE:
        return new == NONE or new == decided(old.value)
    return False


def parse_decision_state(text: str) -> DecisionState:
    parts = text.split()
    if parts == ["Any"]:
        return ANY
    if parts == ["None"]:
        return NONE
    if len(parts) == 2 and parts[0] == "Maybe":
        return maybe(parts[1])
    if len(parts) == 2 and parts[0] == "Decided":
        return decided(parts[1])
    raise ValueError(f"bad decision state {text!r}")


class DecisionTable:
    """Decision states for the phase-2 quorums of register sets ``0..horizon``.

    Rows past the horizon are implicitly all Any.
    """

    __slots__ = ("cfg", "rows", "_hash")

    def __init__(self, cfg: Configuration, rows: tuple[tuple[DecisionState, ...], ...]):
        self.cfg = cfg
        self.rows = rows
        self._hash: int | None = None

    @classmethod
    def initial(cls, cfg: Configuration, horizon: int = 0) -> DecisionTable:
        return cls(cfg, tuple((ANY,) * len(cfg.phase2(r)) for r in range(horizon + 1)))

    @property
    def horizon(self) -> int:
        return len(self.rows) - 1

    def extended(self, horizon: int) -> DecisionTable:
        if horizon <= self.horizon:
            return self
        extra = tuple(
            (ANY,) * len(self.cfg.phase2(r)) for r in range(self.horizon + 1, horizon + 1)
        )
        return DecisionTable(self.cfg, self.rows + extra)

    def row(self, r: int) -> tuple[DecisionState, ...]:
        if r < len(self.rows):
            return self.rows[r]
        return (ANY,) * len(self.cfg.phase2(r))

    def state(self, r: int, q: Quorum) -> DecisionState:
        return self.row(r)[self.cfg.phase2(r).index(frozenset(q))]

    def items(self) -> Iterator[tuple[int, Quorum, DecisionState]]:
        for r, row in enumerate(self.rows):
            for q, st in zip(self.cfg.phase2(r), row):
                yield r, q, st

    def states_below(self, r: int) -> Iterator[DecisionState]:
        """States of every quorum of register sets ``0..r-1``."""
        for rr in range(r):
            yield from self.row(rr)

    def as_dict(self) -> dict[tuple[int, str], str]:
        return {(r, format_quorum(q)): str(st) for r, q, st in self.items()}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DecisionTable):
            return NotImplemented
        return self.rows == other.rows and self.cfg == other.cfg

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.rows)
        return self._hash

    def __repr__(self) -> str:
        body = "; ".join(f"R{r} {format_quorum(q)} {st}" for r, q, st in self.items())
        return f"DecisionTable({body})"


def update_decisions(
    dt: DecisionTable, table: StateTable, r: int, s: int, obs: RegisterState
) -> DecisionTable:
    """Apply the three update rules for one read of register ``r`` on ``s``.

    ``table`` must already contain the observation.
    """
    dt = dt.extended(r)
    rows = list(dt.rows)
    rc = dt.cfg.register_set(r)
    quorums = rc.phase2
    if obs is NIL:
        rows[r] = tuple(
            NONE if s in q and st.kind <= Kind.MAYBE else st
            for q, st in zip(quorums, rows[r])
        )
        return DecisionTable(dt.cfg, tuple(rows))

    v = obs.value
    mv = maybe(v)
    dv = decided(v)
    MAYBE, ANYK = Kind.MAYBE, Kind.ANY

    def constrain(st: DecisionState) -> DecisionState:
        k = st.kind
        if k is ANYK:
            return mv
        if k is MAYBE and st.value != v:
            return NONE
        return st

    for rr in range(r):
        rows[rr] = tuple(map(constrain, rows[rr]))
    fast = rc.mode is FAST
    row = []
    for q, st in zip(quorums, rows[r]):
        if s in q:
            if all(table.get(r, m) == obs for m in q):
                st = dv
            else:
                st = constrain(st)
        elif not fast:
            st = constrain(st)
        row.append(st)
    rows[r] = tuple(row)
    return DecisionTable(dt.cfg, tuple(rows))


def derive_decision_table(
    cfg: Configuration, t: StateTable, horizon: int | None = None
) -> DecisionTable:
    """Batch recomputation of the decision table of state table ``t``."""
    top = max(t.top, 0) if horizon is None else max(horizon, t.top, 0)
    values = sorted(t.values())
    index = {v: i for i, v in enumerate(values)}
    nil = [0] * (top + 1)
    vals = [[0] * len(values) for _ in range(top + 1)]
    for r, s, st in t.cells():
        if st is NIL:
            nil[r] |= 1 << s
        else:
            vals[r][index[st.value]] |= 1 << s
    quorums = []
    fast = []
    for r in range(top + 1):
        rc = cfg.register_set(r)
        quorums.append(rc.phase2_masks)
        fast.append(rc.mode is FAST)
    codes = kernels.decision_codes(nil, vals, quorums, fast)
    rows = tuple(tuple(_from_code(c, values) for c in row) for row in codes)
    return DecisionTable(cfg, rows)


def _from_code(code: int, values: list[Value]) -> DecisionState:
    if code == 0:
        return ANY
    if code == 1:
        return NONE
    v = values[(code - 2) // 2]
    return decided(v) if code % 2 else maybe(v)


@dataclass(frozen=True)
class ClientKnowledge:
    cfg: Configuration = field(repr=False)
    state_table: StateTable
    decision_table: DecisionTable = field(repr=False)
    input_value: Value
    used_register_sets: frozenset[int] = frozenset()

    def __hash__(self) -> int:
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.state_table, self.input_value, self.used_register_sets))
            object.__setattr__(self, "_hash", h)
        return h

    def with_used(self, r: int) -> ClientKnowledge:
        return replace(self, used_register_sets=self.used_register_sets | {r})


def initial_knowledge(cfg: Configuration, input_value: Value) -> ClientKnowledge:
    return ClientKnowledge(
        cfg,
        StateTable(max_register_sets=cfg.max_register_sets),
        DecisionTable.initial(cfg),
        input_value,
    )


def apply_read(k: ClientKnowledge, r: int, s: int, obs: RegisterState) -> ClientKnowledge:
    if obs is UNWRITTEN:
        raise ValueError("a read always observes a written register")
    table = k.state_table.record(r, s, obs)
    if table is k.state_table:
        return k
    dt = update_decisions(k.decision_table, table, r, s, obs)
    return replace(k, state_table=table, decision_table=dt)


def output_value(k: ClientKnowledge) -> Value | None:
    found = None
    for _, _, st in k.decision_table.items():
        if st.kind is Kind.DECIDED:
            if found is not None and st.value != found:
                raise ConflictingDecisions(f"both {found} and {st.value} are decided")
            found = st.value
    return found


def may_write(
    k: ClientKnowledge, c: int, r: int, v: Value, cfg: Configuration | None = None
) -> bool:
    """Whether client ``c`` may write ``v`` to register set ``r`` now."""
    cfg = cfg or k.cfg
    if v != k.input_value and v not in k.state_table.values():
        return False
    if not cfg.is_fast(r) and (cfg.allocated_client(r) != c or r in k.used_register_sets):
        return False
    ok = (NONE, maybe(v), decided(v))
    return all(st in ok for st in k.decision_table.states_below(r))


class _Undetermined(enum.Enum):
    UNDETERMINED = "undetermined"

    def __repr__(self) -> str:
        return "UNDETERMINED"

    __str__ = __repr__


UNDETERMINED = _Undetermined.UNDETERMINED


def choose_value(k: ClientKnowledge, r: int) -> Value | _Undetermined:
    """Value to propose in register set ``r``, or UNDETERMINED to keep reading."""
    candidates = set()
    for st in k.decision_table.states_below(r):
        if st.kind is Kind.ANY:
            return UNDETERMINED
        if st.kind is not Kind.NONE:
            candidates.add(st.value)
    if not candidates:
        return k.input_value
    if len(candidates) > 1:
        return UNDETERMINED
    return candidates.pop()
