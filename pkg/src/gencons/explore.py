"""Bounded exhaustive exploration of every interleaving.

A state is (server columns, client sessions, in-flight messages as a sorted
multiset).  Transitions are: a client (re)starting phase one, delivering any
in-flight message and, optionally, dropping one.  Every new state is checked
for agreement, non-triviality, write-once, may-write discharge and
refinement of each client's decision table by the global one.
"""

from __future__ import annotations

import bisect
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Callable, Collection, Mapping

from gencons.config import Configuration
from gencons.core import ConsensusError, StateTable, Value, Written, format_state
from gencons.oracle import decided_values, global_decision, refinement_failures
from gencons.protocol import (
    GENERALISED,
    Done,
    NoEligibleRegisterSet,
    P1b,
    P2a,
    Phase1,
    Phase2,
    ServerState,
    client_handle,
    client_start_phase1,
    client_timeout,
    new_session,
    server_handle,
)


SAFETY = frozenset({"agreement", "non-triviality", "write-once"})


@dataclass(frozen=True)
class Bounds:
    max_register_sets: int = 2
    max_steps: int = 10_000
    max_attempts: int = 2
    max_states: int = 1_000_000
    drops: bool = False
    max_restarts: int | None = None  # shared by all clients; None = per-client attempts only


@dataclass
class ExploreReport:
    states: int = 0
    transitions: int = 0
    max_depth: int = 0
    violations: Counter = field(default_factory=Counter)
    examples: dict[str, tuple[str, ...]] = field(default_factory=dict)
    coverage: Counter = field(default_factory=Counter)
    complete: bool = True

    @property
    def passed(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [
            f"states {self.states}",
            f"transitions {self.transitions}",
            f"max depth {self.max_depth}",
            f"complete {'yes' if self.complete else 'no (state budget hit)'}",
        ]
        for k in sorted(self.coverage):
            out.append(f"coverage {k} {self.coverage[k]}")
        if not self.violations:
            out.append("violations 0")
        for kind in sorted(self.violations):
            out.append(f"violation {kind} x{self.violations[kind]}")
            for step in self.examples[kind]:
                out.append(f"  {step}")
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


class StateSpaceExceeded(ConsensusError):
    def __init__(self, report: ExploreReport):
        super().__init__(f"state budget exhausted after {report.states} states")
        self.report = report


def _msg_key(rec) -> tuple:
    to_server, dst, src, msg = rec
    regs = getattr(msg, "registers", ())
    return (to_server, dst, src, type(msg).__name__, msg.r, getattr(msg, "v", ""),
            tuple((i, format_state(st)) for i, st in regs))


def _label(rec) -> str:
    to_server, dst, src, msg = rec
    a, b = (f"C{src}", f"S{dst}") if to_server else (f"S{src}", f"C{dst}")
    return f"{type(msg).__name__} {a}->{b} {msg.fields()}"


def _add(net: tuple, recs) -> tuple:
    lst = list(net)
    for rec in recs:
        bisect.insort(lst, rec, key=_msg_key)
    return tuple(lst)


def _remove(net: tuple, i: int) -> tuple:
    return net[:i] + net[i + 1:]


def explore(
    cfg: Configuration,
    inputs: Mapping[int, Value],
    bounds: Bounds = Bounds(),
    *,
    strategy: str = GENERALISED,
    mutations=(),
    visit: Callable | None = None,
    raise_on_budget: bool = False,
    reduce: bool = True,
    stop_on: Collection[str] = (),
    breadth_first: bool = False,
) -> ExploreReport:
    """Search all interleavings within ``bounds``.

    ``visit(servers, sessions, net)`` is called on every new state.  With
    ``reduce=False`` every enabled transition is expanded (no partial-order
    reduction), which visits every reachable state.  The search returns as
    soon as a violation of a kind listed in ``stop_on`` is found;
    ``breadth_first`` makes that first example a shortest one.

    States that break agreement, non-triviality or write-once are not
    expanded further.  Failed may-write and refinement checks are recorded
    and the search continues past them.
    """
    if cfg.max_register_sets != bounds.max_register_sets:
        cfg = replace(cfg, max_register_sets=bounds.max_register_sets)
    input_set = set(inputs.values())
    report = ExploreReport()
    sessions0 = tuple(
        new_session(cfg, c, v, strategy=strategy, mutations=mutations)
        for c, v in sorted(inputs.items())
    )
    index = {sess.cid: i for i, sess in enumerate(sessions0)}
    init = (tuple(() for _ in range(cfg.servers)), sessions0, ())

    truth_memo: dict = {}
    refine_memo: dict = {}
    decided_memo: dict = {}

    def table_of(servers) -> StateTable:
        return StateTable.from_columns(dict(enumerate(servers)), cfg.max_register_sets)

    def truth(servers):
        g = truth_memo.get(servers)
        if g is None:
            t = table_of(servers)
            g = truth_memo[servers] = global_decision(cfg, t, cfg.max_register_sets - 1)
        return g

    def state_issues(servers, sessions) -> list[tuple[str, str]]:
        issues = []
        dv = decided_memo.get(servers)
        if dv is None:
            dv = decided_memo[servers] = decided_values(cfg, table_of(servers))
        if len(dv) > 1:
            issues.append(("agreement", "decided " + ",".join(sorted(dv))))
        outs = {s.phase.v for s in sessions if isinstance(s.phase, Done)}
        if len(outs) > 1:
            issues.append(("agreement", "outputs " + ",".join(sorted(outs))))
        if outs - input_set:
            issues.append(("non-triviality", "output " + ",".join(sorted(outs - input_set))))
        for sess in sessions:
            key = (sess.knowledge.decision_table, servers)
            bad = refine_memo.get(key)
            if bad is None:
                bad = refine_memo[key] = next(
                    refinement_failures(sess.knowledge.decision_table, truth(servers)), ()
                )
            if bad:
                r, q, mine, real = bad
                issues.append(("refinement", f"C{sess.cid} R{r} has {mine}, truth {real}"))
        return issues

    handle_memo: dict = {}
    restart_memo: dict = {}
    server_memo: dict = {}
    useless_memo: dict = {}

    interned: dict = {}

    def canonical(step):
        # equal sessions become one object, so later lookups hit on identity
        if step is not None:
            sess = interned.setdefault(step.session, step.session)
            if sess is not step.session:
                step = step._replace(session=sess)
        return step

    def handle(sess, src, msg):
        key = (sess, src, msg)
        step = handle_memo.get(key)
        if step is None:
            step = handle_memo[key] = canonical(client_handle(sess, src, msg))
        return step

    def restart(sess):
        try:
            return restart_memo[sess]
        except KeyError:
            pass
        try:
            step = client_start_phase1(client_timeout(sess))
        except NoEligibleRegisterSet:
            step = None
        restart_memo[sess] = step = canonical(step)
        return step

    def deliver_to_server(col, msg):
        key = (col, msg)
        out = server_memo.get(key)
        if out is None:
            st, reply = server_handle(ServerState(col), msg)
            out = server_memo[key] = (st.registers, reply)
        return out

    def client_step(servers, sessions, net, c, step, issues):
        for r, v, ok in step.writes:
            if not ok:
                issues.append(("may-write", f"C{c} wrote {v} to R{r}"))
        sessions = sessions[:index[c]] + (step.session,) + sessions[index[c] + 1:]
        net = _add(net, [(True, s, c, msg) for s, msg in step.sends])
        return servers, sessions, net

    def useless(rec, servers, sessions) -> bool:
        to_server, dst, src, msg = rec
        if to_server:
            return type(msg) is P2a and len(servers[dst]) > msg.r
        sess = sessions[index[dst]]
        key = (rec, sess)
        out = useless_memo.get(key)
        if out is None:
            out = useless_memo[key] = useless_reply(sess, src, msg)
        return out

    def useless_reply(sess, src, msg) -> bool:
        if isinstance(sess.phase, Done):
            return True
        if sess.strategy != GENERALISED or sess.mutations:
            return False
        # a stale reply that teaches the client nothing is a no-op
        if type(msg) is P1b:
            if isinstance(sess.phase, Phase1) and sess.phase.r == msg.r:
                return False
            t = sess.knowledge.state_table
            return len(msg.registers) >= msg.r and all(
                t.get(i, src) == st for i, st in msg.registers
            )
        if isinstance(sess.phase, Phase2) and sess.phase.r == msg.r:
            return False
        return sess.knowledge.state_table.get(msg.r, src) == Written(msg.v)

    def prune(state, touched):
        # drop messages whose delivery can no longer change anything; only
        # messages to a node that just changed can have become useless
        servers, sessions, net = state
        keep = tuple(rec for rec in net
                     if (rec[0], rec[1]) not in touched or not useless(rec, servers, sessions))
        return state if len(keep) == len(net) else (servers, sessions, keep)

    def successors(state, only=None):
        servers, sessions, net = state
        restarts = sum(max(s.attempts - 1, 0) for s in sessions)
        for sess in sessions:
            if (sess.attempts and bounds.max_restarts is not None
                    and restarts >= bounds.max_restarts):
                continue
            if only is not None and only != (False, sess.cid):
                continue
            if isinstance(sess.phase, Done) or sess.attempts >= bounds.max_attempts:
                continue
            step = restart(sess)
            if step is None:
                continue
            issues: list = []
            nxt = client_step(servers, sessions, net, sess.cid, step, issues)
            touched = {(False, sess.cid)} | {(True, s) for s, _ in step.sends}
            yield ("restart" if sess.attempts else "start") + f" C{sess.cid}", nxt, issues, touched
        prev = None
        for i, rec in enumerate(net):
            if rec == prev:
                continue
            prev = rec
            to_server, dst, src, msg = rec
            if only is not None and only != (to_server, dst):
                continue
            rest = _remove(net, i)
            issues = []
            if to_server:
                old = servers[dst]
                col, reply = deliver_to_server(old, msg)
                if col[: len(old)] != old:
                    issues.append(("write-once", f"S{dst} rewrote a register"))
                for r in range(len(old), len(col)):
                    if isinstance(col[r], Written) and col[r].value not in input_set:
                        issues.append(("non-triviality", f"S{dst} R{r}={col[r].value}"))
                new_servers = servers[:dst] + (col,) + servers[dst + 1:]
                new_net = rest if reply is None else _add(rest, [(False, src, dst, reply)])
                nxt = (new_servers, sessions, new_net)
                touched = {(True, dst), (False, src)}
            else:
                sess = sessions[index[dst]]
                step = handle(sess, src, msg)
                nxt = client_step(servers, sessions, rest, dst, step, issues)
                touched = {(False, dst)} | {(True, s) for s, _ in step.sends}
            yield "deliver " + _label(rec), nxt, issues, touched
            if bounds.drops:
                yield "drop " + _label(rec), (servers, sessions, rest), [], ()

    def reduced(state) -> list:
        # A client with no requests in flight can receive no new messages
        # except through its own steps, so its transitions form a persistent
        # set.  Every checked property is stable, and persistent-set search
        # keeps every terminal state, so nothing is missed.
        if reduce:
            _, sessions, net = state
            busy = {rec[2] for rec in net if rec[0]}
            best = None
            for sess in sessions:
                if sess.cid in busy:
                    continue
                moves = list(successors(state, (False, sess.cid)))
                if moves and (best is None or len(moves) < len(best)):
                    best = moves
            if best is not None:
                report.coverage["reduced"] += 1
                return best
        return list(successors(state))

    visited = {init}
    report.states = 1
    frontier = deque([(init, 0, ())])
    take = frontier.popleft if breadth_first else frontier.pop
    if visit:
        visit(*init)
    while frontier:
        state, depth, path = take()
        report.max_depth = max(report.max_depth, depth)
        if depth >= bounds.max_steps:
            report.coverage["depth-cut"] += 1
            continue
        for label, nxt, issues, touched in reduced(state):
            nxt = prune(nxt, touched)
            report.transitions += 1
            report.coverage[label.split()[0]] += 1
            if nxt in visited:
                continue
            issues = issues + state_issues(nxt[0], nxt[1])
            visited.add(nxt)
            report.states += 1
            if visit:
                visit(*nxt)
            here = path + (label,)
            if issues:
                for kind, detail in issues:
                    report.violations[kind] += 1
                    report.examples.setdefault(kind, here + (f"=> {kind}: {detail}",))
                kinds = {kind for kind, _ in issues}
                if kinds & set(stop_on):
                    report.complete = False
                    return report
                if kinds & SAFETY:
                    continue  # do not search beyond a broken state
            outs = [s.phase.v for s in nxt[1] if isinstance(s.phase, Done)]
            if len(outs) == len(nxt[1]):
                report.coverage["all-decided"] += 1
            if report.states >= bounds.max_states:
                report.complete = False
                if raise_on_budget:
                    raise StateSpaceExceeded(report)
                return report
            frontier.append((nxt, depth + 1, here))
    return report

