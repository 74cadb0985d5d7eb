"""Ground truth computed from the complete global state table.

``global_decision`` does not use the bitmask kernels or the incremental
update rules.  It asks, for each quorum and each candidate value, whether the
quorum could still end up deciding that value given what is already written.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from gencons.config import Configuration
from gencons.core import NIL, StateTable, Value, Written, parse_node, parse_state
from gencons.decision import (
    ANY,
    NONE,
    DecisionState,
    DecisionTable,
    Kind,
    decided,
    maybe,
)

GlobalDecisionView = DecisionTable

_FRESH = object()  # stands for any value not yet written anywhere


def _feasible(cfg: Configuration, t: StateTable, r: int, q, v) -> bool:
    """Could quorum ``q`` of set ``r`` still decide ``v``?"""
    for s in q:
        st = t.get(r, s)
        if st is NIL or (isinstance(st, Written) and st.value != v):
            return False
    row_values = {st.value for st in t.row(r).values() if isinstance(st, Written)}
    if not cfg.is_fast(r) and row_values - {v}:
        # a client-restricted set holds at most one value
        return False
    for rr, _, st in t.cells():
        if rr > r and isinstance(st, Written) and st.value != v:
            # anything written above r was checked against this quorum
            return False
    return True


def quorum_state(cfg: Configuration, t: StateTable, r: int, q) -> DecisionState:
    members = [t.get(r, s) for s in q]
    first = members[0]
    if isinstance(first, Written) and all(m == first for m in members):
        return decided(first.value)
    if _feasible(cfg, t, r, q, _FRESH):
        return ANY
    live = [v for v in sorted(t.values()) if _feasible(cfg, t, r, q, v)]
    if not live:
        return NONE
    if len(live) == 1:
        return maybe(live[0])
    return ANY


def global_decision(
    cfg: Configuration, t: StateTable, horizon: int | None = None
) -> GlobalDecisionView:
    top = max(t.top, 0) if horizon is None else max(horizon, t.top, 0)
    rows = tuple(
        tuple(quorum_state(cfg, t, r, q) for q in cfg.phase2(r)) for r in range(top + 1)
    )
    return DecisionTable(cfg, rows)


def refines(client: DecisionState, truth: DecisionState) -> bool:
    """Whether a client's view is consistent with the global state."""
    match client.kind:
        case Kind.ANY:
            return True
        case Kind.MAYBE:
            return truth in (maybe(client.value), decided(client.value), NONE)
        case Kind.NONE:
            return truth == NONE
        case Kind.DECIDED:
            return truth == client
    return False


def refinement_failures(client: DecisionTable, truth: DecisionTable):
    for r, q, st in client.items():
        g = truth.state(r, q)
        if not refines(st, g):
            yield r, q, st, g


def decided_values(cfg: Configuration, t: StateTable) -> dict[Value, tuple[int, frozenset]]:
    """Every value decided by some phase-2 quorum, with one witness each."""
    out: dict[Value, tuple[int, frozenset]] = {}
    for r in range(t.top + 1):
        for q in cfg.phase2(r):
            st = t.get(r, min(q))
            if isinstance(st, Written) and all(t.get(r, s) == st for s in q):
                out.setdefault(st.value, (r, q))
    return out


# -- trace verdicts ---------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    passed: bool
    detail: str = ""
    prefix: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        return "pass" if self.passed else f"FAIL {self.detail}"


_SET = re.compile(r"^  set S(\d+) R(\d+)=(\S+)$")
_OUT = re.compile(r"^  output C(\d+) (\S+)$")


def _walk(trace):
    """Yield (entry index, lines so far, outputs, table) after every entry."""
    columns = {}
    for h in trace.header:
        if h.startswith("column "):
            name, _, cells = h[7:].partition(" ")
            columns[parse_node(name)[1]] = [parse_state(x) for x in cells.split(",") if x]
    t = StateTable.from_columns({s: tuple(c) for s, c in columns.items()}, 1 << 30)
    outputs: dict[int, Value] = {}
    lines: list[str] = []
    for i, e in enumerate(trace.entries):
        lines.extend(e.lines())
        for fx in e.effects:
            if m := _SET.match(fx):
                t = t.record(int(m.group(2)), int(m.group(1)), parse_state(m.group(3)))
            elif m := _OUT.match(fx):
                outputs[int(m.group(1))] = m.group(2)
        yield i, lines, outputs, t


def _inputs(trace) -> set[Value]:
    """Client inputs, plus values already written in the initial columns."""
    found = set()
    for h in trace.header:
        if h.startswith("client "):
            for kv in h.split()[2:]:
                k, _, v = kv.partition("=")
                if k == "input":
                    found.add(v)
        elif h.startswith("column "):
            found |= {x for x in h.split(" ", 2)[2].split(",") if x not in ("", ".", "nil")}
    return found


def assert_agreement(trace, cfg: Configuration | None = None) -> Verdict:
    """All outputs agree; with ``cfg``, also at most one value is ever decided."""
    for _, lines, outputs, t in _walk(trace):
        if len(set(outputs.values())) > 1:
            pairs = ", ".join(f"C{c}={v}" for c, v in sorted(outputs.items()))
            return Verdict(False, f"conflicting outputs {pairs}", tuple(lines))
        if cfg is not None:
            dv = decided_values(cfg, t)
            if len(dv) > 1:
                desc = ", ".join(f"{v} at R{r}" for v, (r, _) in sorted(dv.items()))
                return Verdict(False, f"several values decided: {desc}", tuple(lines))
    return Verdict(True)


def assert_nontriviality(trace) -> Verdict:
    inputs = _inputs(trace)
    for _, lines, outputs, t in _walk(trace):
        for c, v in sorted(outputs.items()):
            if v not in inputs:
                return Verdict(False, f"C{c} output {v}, which is nobody's input", tuple(lines))
        for r, s, st in t.cells():
            if isinstance(st, Written) and st.value not in inputs:
                return Verdict(False, f"S{s} R{r} holds {st.value}, which is nobody's input",
                               tuple(lines))
    return Verdict(True)

