"""Deterministic discrete-event simulation with seeded faults.

Events are ordered by ``(time, sequence number)``; every random draw comes
from one ``random.Random(seed)``.  A run produces a :class:`Trace` whose text
form can be replayed: replay re-executes the recorded events in order, takes
network decisions (delivery times, drops, duplicates) from the recording and
fails on the first line that differs.
"""

from __future__ import annotations

import heapq
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

from gencons.config import Configuration
from gencons.core import (
    ConsensusError,
    RegisterState,
    StateTable,
    Value,
    Written,
    format_state,
    parse_node,
    parse_state,
)
from gencons.protocol import (
    GENERALISED,
    Done,
    Envelope,
    NoEligibleRegisterSet,
    P1a,
    P1b,
    P2a,
    P2b,
    Phase1,
    Phase2,
    ServerState,
    Step,
    client_handle,
    client_start_phase1,
    client_timeout,
    new_session,
    server_handle,
)

DEFAULT_TIMEOUT = 10
DEFAULT_HORIZON = 1000


class SafetyViolation(ConsensusError):
    def __init__(self, kind: str, detail: str, prefix: str = ""):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail
        self.prefix = prefix


class HorizonExceeded(ConsensusError):
    def __init__(self, trace: Trace):
        undecided = [f"C{c}" for c, v in sorted(trace.outputs.items()) if v is None]
        super().__init__(f"no decision by the horizon for {', '.join(undecided)}")
        self.trace = trace


class ReplayDivergence(ConsensusError):
    pass


@dataclass(frozen=True)
class LinkFault:
    """Per-link override: a fixed delay and/or dropping every message."""

    delay: int | None = None
    drop: bool = False


@dataclass(frozen=True)
class FaultPlan:
    seed: int = 0
    min_delay: int = 1
    max_delay: int = 1
    drop: float = 0.0
    dup: float = 0.0
    crashes: Mapping[int, int] = field(default_factory=dict)
    links: Mapping[tuple[str, str], LinkFault] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 1 <= self.min_delay <= self.max_delay:
            raise ValueError("need 1 <= min_delay <= max_delay")
        for p in (self.drop, self.dup):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        for (src, dst), lf in self.links.items():
            parse_node(src), parse_node(dst)
            if lf.delay is not None and lf.delay < 1:
                raise ValueError("link delay must be at least 1")

    @property
    def reliable(self) -> bool:
        return self.drop == 0 and self.dup == 0 and self.min_delay == self.max_delay


@dataclass(frozen=True)
class ClientSpec:
    input: Value
    start: int = 0
    first_set: int = 0


@dataclass
class Scenario:
    cfg: Configuration
    clients: dict[int, ClientSpec]
    plan: FaultPlan = field(default_factory=FaultPlan)
    horizon: int = DEFAULT_HORIZON
    timeout: int = DEFAULT_TIMEOUT
    strategy: str = GENERALISED
    columns: dict[int, tuple[RegisterState, ...]] = field(default_factory=dict)
    mutations: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        for c in self.clients:
            if not 0 <= c < max(self.cfg.clients, 1):
                raise ValueError(f"client C{c} not in configuration")
        for s in self.columns:
            if not 0 <= s < self.cfg.servers:
                raise ValueError(f"server S{s} not in configuration")
        if self.timeout < 1:
            raise ValueError("timeout must be positive")


# -- traces -----------------------------------------------------------------


@dataclass(frozen=True)
class TraceEntry:
    time: int
    event: str
    effects: tuple[str, ...] = ()

    def lines(self) -> list[str]:
        return [f"{self.time} {self.event}", *self.effects]


@dataclass
class Trace:
    header: list[str]
    entries: list[TraceEntry]
    outputs: dict[int, Value | None]
    table: StateTable
    verdict: str

    def footer(self) -> list[str]:
        outs = " ".join(f"C{c}={v or '-'}" for c, v in sorted(self.outputs.items()))
        lines = [f"outputs {outs}"]
        width = max((s for _, s, _ in self.table.cells()), default=-1) + 1
        for r in range(self.table.top + 1):
            cells = " ".join(format_state(self.table.get(r, s)) for s in range(width))
            lines.append(f"table R{r} {cells}")
        lines.append(f"verdict {self.verdict}")
        return lines

    def text(self) -> str:
        out = [f"# {h}" for h in self.header]
        for e in self.entries:
            out.extend(e.lines())
        out.extend(f"# {f}" for f in self.footer())
        return "\n".join(out) + "\n"

    __str__ = text

    @classmethod
    def parse(cls, text: str) -> Trace:
        header, entries, tail = [], [], []
        current = None
        for raw in text.splitlines():
            if not raw.strip():
                continue
            if raw.startswith("# "):
                (tail if entries else header).append(raw[2:])
            elif raw.startswith("  "):
                if current is None:
                    raise ValueError(f"effect before any event: {raw!r}")
                current[2].append(raw)
            else:
                t, _, ev = raw.partition(" ")
                current = (int(t), ev, [])
                entries.append(current)
        parsed = [TraceEntry(t, ev, tuple(fx)) for t, ev, fx in entries]
        outputs, rows, verdict = {}, [], "unknown"
        for line in tail:
            key, _, rest = line.partition(" ")
            if key == "outputs":
                for item in rest.split():
                    c, _, v = item.partition("=")
                    outputs[parse_node(c)[1]] = None if v == "-" else v
            elif key == "table":
                rows.append(rest.split()[1:])
            elif key == "verdict":
                verdict = rest
        return cls(header, parsed, outputs, StateTable.from_rows(rows, 1 << 30), verdict)

    # -- statistics ---------------------------------------------------------

    def _sends(self, src: str, kind: str):
        pat = re.compile(rf"^  (send|drop) {kind} {src}->")
        for e in self.entries:
            for fx in e.effects:
                if pat.match(fx) and not fx.endswith(" dup"):
                    yield e, fx

    def sent(self, node: str, kind: str) -> int:
        return sum(1 for _ in self._sends(node, kind))

    def delivered(self, node: str, kind: str) -> int:
        """Messages of ``kind`` delivered to ``node`` (servers: only while up)."""
        n = 0
        for e in self.entries:
            if e.event.startswith(f"{kind} ") and e.event.split()[1].endswith(f"->{node}"):
                n += "  lost" not in e.effects
        return n

    def output_time(self, c: int) -> int | None:
        for e in self.entries:
            if any(fx.startswith(f"  output C{c} ") for fx in e.effects):
                return e.time
        return None

    def round_trips(self, c: int) -> int:
        """Broadcast rounds (phase-one or phase-two) client ``c`` started before output."""
        rounds = 0
        for e in self.entries:
            if any(re.match(rf"^  (send|drop) P[12]a C{c}->S0 ", fx) for fx in e.effects):
                rounds += 1
            if any(fx.startswith(f"  output C{c} ") for fx in e.effects):
                break
        return rounds


# -- engine -----------------------------------------------------------------


_EVENT_RE = re.compile(r"^(P1a|P1b|P2a|P2b) (\S+)->(\S+) r=(\d+)(?: v=(\S+))?(?: regs=\{(.*)\})?$")


def parse_message(kind: str, r: int, v: str | None, regs: str | None):
    match kind:
        case "P1a":
            return P1a(r)
        case "P1b":
            items = []
            for part in filter(None, (regs or "").split(",")):
                i, _, st = part.partition(":")
                items.append((int(i), parse_state(st)))
            return P1b(r, tuple(items))
        case "P2a":
            return P2a(r, v)
        case "P2b":
            return P2b(r, v)
    raise ValueError(kind)


class _RandomNetwork:
    def __init__(self, plan: FaultPlan):
        self.plan = plan
        self.rng = random.Random(plan.seed)

    def transmit(self, env: Envelope, now: int) -> list[int]:
        p, rng = self.plan, self.rng
        u, d, w, d2 = rng.random(), rng.randint(p.min_delay, p.max_delay), \
            rng.random(), rng.randint(p.min_delay, p.max_delay)
        link = p.links.get((env.src, env.dst))
        if link is not None and link.delay is not None:
            d = d2 = link.delay
        if (link is not None and link.drop) or u < p.drop:
            return []
        times = [now + d]
        if w < p.dup:
            times.append(now + d2)
        return times


class _ScriptedNetwork:
    """Replays recorded network decisions for one trace entry."""

    def __init__(self, recorded: TraceEntry):
        self.effects = list(recorded.effects)
        self.used = [False] * len(self.effects)

    def transmit(self, env: Envelope, now: int) -> list[int]:
        line = env.line()
        for i, fx in enumerate(self.effects):
            if self.used[i]:
                continue
            if fx == f"  drop {line}":
                self.used[i] = True
                return []
            if fx.startswith(f"  send {line} @") and not fx.endswith(" dup"):
                self.used[i] = True
                times = [int(fx.rsplit("@", 1)[1])]
                j = i + 1
                if j < len(self.effects) and not self.used[j] and \
                        self.effects[j].startswith(f"  send {line} @") and \
                        self.effects[j].endswith(" dup"):
                    self.used[j] = True
                    times.append(int(self.effects[j].rsplit("@", 1)[1].split()[0]))
                return times
        raise ReplayDivergence(f"no recorded network decision for {line}")


class _Engine:
    def __init__(self, sc: Scenario, header: list[str]):
        self.sc = sc
        self.cfg = sc.cfg
        self.header = header
        self.servers = [ServerState(tuple(sc.columns.get(s, ()))) for s in range(sc.cfg.servers)]
        self.crashed: set[int] = set()
        self.sessions = {
            c: new_session(sc.cfg, c, spec.input, first_set=spec.first_set,
                           strategy=sc.strategy, mutations=sc.mutations)
            for c, spec in sorted(sc.clients.items())
        }
        # values already present in the initial columns came from earlier clients
        self.inputs = {spec.input for spec in sc.clients.values()} | {
            st.value for col in sc.columns.values() for st in col if isinstance(st, Written)
        }
        self.timers: dict[int, int | None] = {c: None for c in self.sessions}
        self.in_flight: Counter = Counter()
        self.entries: list[TraceEntry] = []
        self.decided: dict[Value, tuple[int, str]] = {}
        self.network = None
        self.pending: list = []
        self._seq = 0
        self.now = 0
        for s in range(sc.cfg.servers):
            for r, st in enumerate(self.servers[s].registers):
                if isinstance(st, Written):
                    self._note_write(r, s, st.value)

    # scheduling is only meaningful for live runs; replay ignores it
    def schedule(self, t: int, event: tuple) -> None:
        self._seq += 1
        heapq.heappush(self.pending, (t, self._seq, event))

    def violation(self, kind: str, detail: str, fx: list[str], event: str) -> None:
        fx.append(f"  violation {kind} {detail}")
        self.entries.append(TraceEntry(self.now, event, tuple(fx)))
        prefix = "\n".join(
            [f"# {h}" for h in self.header] + [l for e in self.entries for l in e.lines()]
        )
        raise SafetyViolation(kind, detail, prefix + "\n")

    # -- effects --------------------------------------------------------

    def _send(self, env: Envelope, fx: list[str]) -> None:
        line = env.line()
        times = self.network.transmit(env, self.now)
        if not times:
            fx.append(f"  drop {line}")
        for i, t in enumerate(times):
            fx.append(f"  send {line} @{t}" + (" dup" if i else ""))
            self.in_flight[(line, t)] += 1
            self.schedule(t, ("deliver", env))

    def _note_write(self, r: int, s: int, v: Value) -> str | None:
        want = Written(v)
        for q in self.cfg.phase2(r):
            if s in q and all(self.servers[m].get(r) == want for m in q):
                self.decided.setdefault(v, (r, ",".join(f"S{m}" for m in sorted(q))))
        if len(self.decided) > 1:
            return " ".join(f"{v}@R{r}{{{q}}}" for v, (r, q) in sorted(self.decided.items()))
        return None

    def _client_step(self, c: int, before, step: Step, fx: list[str], event: str) -> None:
        sess = step.session
        for r, v, ok in step.writes:
            if not ok:
                self.violation("may-write", f"C{c} wrote {v} to R{r}", fx, event)
        if sess.phase != before.phase:
            fx.append(f"  phase C{c} {sess.phase}")
        for r in sorted(sess.knowledge.used_register_sets - before.knowledge.used_register_sets):
            fx.append(f"  used C{c} R{r}")
        if isinstance(sess.phase, Done) and not isinstance(before.phase, Done):
            v = sess.phase.v
            fx.append(f"  output C{c} {v}")
            others = {s.phase.v for s in self.sessions.values() if isinstance(s.phase, Done)}
            if others - {v}:
                self.violation("agreement", f"outputs {sorted(others | {v})}", fx, event)
            if v not in self.inputs:
                self.violation("non-triviality", f"C{c} output {v}", fx, event)
        self.sessions[c] = sess
        for s, msg in step.sends:
            self._send(Envelope(f"C{c}", f"S{s}", msg, self.now), fx)
        if isinstance(sess.phase, (Phase1, Phase2)):
            if sess.phase != before.phase or step.sends:
                t = self.now + self.sc.timeout
                self.timers[c] = t
                fx.append(f"  timer C{c} @{t}")
                self.schedule(t, ("timeout", c))
        else:
            self.timers[c] = None

    def _restart(self, c: int, sess, fx: list[str], event: str) -> None:
        try:
            step = client_start_phase1(sess)
        except NoEligibleRegisterSet:
            fx.append(f"  give-up C{c}")
            self.sessions[c] = sess
            self.timers[c] = None
            return
        self._client_step(c, sess, step, fx, event)

    # -- events ---------------------------------------------------------

    def describe(self, event: tuple) -> str:
        match event:
            case ("start", c):
                return f"start C{c} v={self.sc.clients[c].input}"
            case ("timeout", c):
                return f"timeout C{c}"
            case ("crash", s):
                return f"crash S{s}"
            case ("deliver", env):
                return env.line()
        raise ValueError(event)

    def stale(self, event: tuple) -> bool:
        """Events that change nothing and are left out of the trace."""
        match event:
            case ("timeout", c):
                return self.timers[c] != self.now
        return False

    def process(self, event: tuple) -> TraceEntry:
        text = self.describe(event)
        fx: list[str] = []
        match event:
            case ("start", c):
                self._restart(c, self.sessions[c], fx, text)
            case ("timeout", c):
                if self.timers[c] != self.now:
                    raise ReplayDivergence(f"no timer armed for C{c} at {self.now}")
                self.timers[c] = None
                self._restart(c, client_timeout(self.sessions[c]), fx, text)
            case ("crash", s):
                self.crashed.add(s)
            case ("deliver", env):
                key = (env.line(), self.now)
                if self.in_flight[key] <= 0:
                    raise ReplayDivergence(f"delivery of a message not in flight: {text}")
                self.in_flight[key] -= 1
                kind, n = parse_node(env.dst)
                if kind == "S":
                    self._deliver_server(n, parse_node(env.src)[1], env.msg, fx, text)
                else:
                    sess = self.sessions[n]
                    step = client_handle(sess, parse_node(env.src)[1], env.msg)
                    self._client_step(n, sess, step, fx, text)
        entry = TraceEntry(self.now, text, tuple(fx))
        self.entries.append(entry)
        return entry

    def _deliver_server(self, s: int, c: int, msg, fx: list[str], event: str) -> None:
        if s in self.crashed:
            fx.append("  lost")
            return
        old = self.servers[s]
        new, reply = server_handle(old, msg)
        if not new.extends(old):
            self.violation("write-once", f"S{s} rewrote a register", fx, event)
        self.servers[s] = new
        for r in range(len(old.registers), len(new.registers)):
            st = new.registers[r]
            fx.append(f"  set S{s} R{r}={format_state(st)}")
            if isinstance(st, Written):
                if st.value not in self.inputs:
                    self.violation("non-triviality", f"S{s} R{r} holds {st.value}", fx, event)
                clash = self._note_write(r, s, st.value)
                if clash:
                    self.violation("agreement", f"decided {clash}", fx, event)
        if reply is not None:
            self._send(Envelope(f"S{s}", f"C{c}", reply, self.now), fx)

    def result(self) -> Trace:
        outputs = {c: sess.output for c, sess in self.sessions.items()}
        table = StateTable.from_columns(
            {s: st.registers for s, st in enumerate(self.servers)}, 1 << 30
        )
        verdict = "ok" if all(v is not None for v in outputs.values()) else "undecided"
        return Trace(list(self.header), list(self.entries), outputs, table, verdict)


def _header(sc: Scenario) -> list[str]:
    p = sc.plan
    lines = [
        "trace gencons",
        f"config {sc.cfg.name or 'inline'} servers={sc.cfg.servers} clients={sc.cfg.clients}",
        f"plan seed={p.seed} delay={p.min_delay}..{p.max_delay} drop={p.drop} dup={p.dup}",
        f"timeout {sc.timeout}",
        f"horizon {sc.horizon}",
        f"strategy {sc.strategy}",
    ]
    if sc.mutations:
        lines.append("mutations " + ",".join(str(m) for m in sorted(sc.mutations)))
    for c, spec in sorted(sc.clients.items()):
        lines.append(f"client C{c} input={spec.input} start={spec.start} first_set={spec.first_set}")
    for s, col in sorted(sc.columns.items()):
        lines.append(f"column S{s} " + ",".join(format_state(st) for st in col))
    return lines


def run_scenario(sc: Scenario, *, require_decision: bool = False) -> Trace:
    """Run to quiescence or the horizon, checking safety after every event."""
    eng = _Engine(sc, _header(sc))
    eng.network = _RandomNetwork(sc.plan)
    for s, t in sorted(sc.plan.crashes.items()):
        eng.schedule(t, ("crash", s))
    for c, spec in sorted(sc.clients.items()):
        eng.schedule(spec.start, ("start", c))
    while eng.pending:
        t, _, event = heapq.heappop(eng.pending)
        if t > sc.horizon:
            break
        eng.now = t
        if eng.stale(event):
            continue
        eng.process(event)
    trace = eng.result()
    if require_decision and trace.verdict != "ok":
        raise HorizonExceeded(trace)
    return trace


def run(
    cfg: Configuration,
    inputs: Mapping[int, Value],
    plan: FaultPlan | None = None,
    horizon: int = DEFAULT_HORIZON,
    **options,
) -> Trace:
    """Run clients ``inputs`` (all starting at time 0) under ``plan``."""
    require = options.pop("require_decision", False)
    clients = {c: ClientSpec(v) for c, v in inputs.items()}
    sc = Scenario(cfg, clients, plan or FaultPlan(), horizon, **options)
    return run_scenario(sc, require_decision=require)


def _scenario_from_header(header: list[str], cfg: Configuration) -> Scenario:
    clients, columns = {}, {}
    timeout, horizon, strategy, mutations = DEFAULT_TIMEOUT, DEFAULT_HORIZON, GENERALISED, ()
    for line in header:
        key, _, rest = line.partition(" ")
        match key:
            case "timeout":
                timeout = int(rest)
            case "horizon":
                horizon = int(rest)
            case "strategy":
                strategy = rest
            case "mutations":
                mutations = tuple(int(m) for m in rest.split(","))
            case "client":
                name, *kvs = rest.split()
                kv = dict(item.split("=", 1) for item in kvs)
                clients[parse_node(name)[1]] = ClientSpec(
                    kv["input"], int(kv.get("start", 0)), int(kv.get("first_set", 0))
                )
            case "column":
                name, _, cells = rest.partition(" ")
                columns[parse_node(name)[1]] = tuple(
                    parse_state(x) for x in cells.split(",") if x
                )
    return Scenario(cfg, clients, FaultPlan(), horizon, timeout, strategy, columns,
                    frozenset(mutations))


def _parse_event(eng: _Engine, text: str) -> tuple:
    parts = text.split()
    match parts:
        case ["start", c, *_]:
            return ("start", parse_node(c)[1])
        case ["timeout", c]:
            return ("timeout", parse_node(c)[1])
        case ["crash", s]:
            return ("crash", parse_node(s)[1])
    m = _EVENT_RE.match(text)
    if not m:
        raise ReplayDivergence(f"unreadable event {text!r}")
    kind, src, dst, r, v, regs = m.groups()
    msg = parse_message(kind, int(r), v, regs)
    return ("deliver", Envelope(src, dst, msg))


def replay(trace: Trace | str, cfg: Configuration) -> Trace:
    """Re-execute a recorded trace; raise ReplayDivergence on any difference."""
    if isinstance(trace, str):
        trace = Trace.parse(trace)
    sc = _scenario_from_header(trace.header, cfg)
    eng = _Engine(sc, list(trace.header))
    for i, rec in enumerate(trace.entries):
        eng.now = rec.time
        eng.network = _ScriptedNetwork(rec)
        try:
            event = _parse_event(eng, rec.event)
            got = eng.process(event)
        except SafetyViolation:
            # a recorded violation must recur on exactly this entry
            if eng.entries[-1] != rec or i != len(trace.entries) - 1:
                raise ReplayDivergence(f"entry {i}: unexpected safety violation")
            raise
        except (KeyError, ValueError) as exc:
            raise ReplayDivergence(f"entry {i}: {exc}") from exc
        if got != rec:
            raise ReplayDivergence(
                f"entry {i} differs:\n recorded: {rec.lines()}\n replayed: {got.lines()}"
            )
    out = eng.result()
    if trace.verdict != "unknown" and out.footer() != trace.footer():
        raise ReplayDivergence(f"final state differs: {out.footer()} vs {trace.footer()}")
    return out
