"""Server and client state machines.

Every handler is a pure step function returning the new state plus the
messages to send.  Clients broadcast to all servers; servers reply to the
sender only.  The simulator and the explorer are the only drivers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

from gencons.config import Configuration
from gencons.core import (
    NIL,
    UNWRITTEN,
    ConsensusError,
    RegisterState,
    Value,
    Written,
    format_state,
)
from gencons.decision import (
    UNDETERMINED,
    ClientKnowledge,
    apply_read,
    choose_value,
    initial_knowledge,
    may_write,
    output_value,
)


class NoEligibleRegisterSet(ConsensusError):
    """Every register set this client could use lies beyond the cap."""


# -- messages ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class P1a:
    r: int

    def fields(self) -> str:
        return f"r={self.r}"


@dataclass(frozen=True, slots=True)
class P1b:
    r: int
    registers: tuple[tuple[int, RegisterState], ...] = ()

    def fields(self) -> str:
        regs = ",".join(f"{i}:{format_state(st)}" for i, st in self.registers)
        return f"r={self.r} regs={{{regs}}}"


@dataclass(frozen=True, slots=True)
class P2a:
    r: int
    v: Value

    def fields(self) -> str:
        return f"r={self.r} v={self.v}"


@dataclass(frozen=True, slots=True)
class P2b:
    r: int
    v: Value

    def fields(self) -> str:
        return f"r={self.r} v={self.v}"


Message = Union[P1a, P1b, P2a, P2b]


@dataclass(frozen=True, slots=True)
class Envelope:
    src: str
    dst: str
    msg: Message
    send_time: int = 0

    def line(self) -> str:
        return f"{type(self.msg).__name__} {self.src}->{self.dst} {self.msg.fields()}"


# -- servers ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ServerState:
    """One server's column of the state table.

    Columns are nil-fill closed, so register ``r`` is written iff
    ``r < len(registers)``.
    """

    registers: tuple[RegisterState, ...] = ()

    def get(self, r: int) -> RegisterState:
        return self.registers[r] if r < len(self.registers) else UNWRITTEN

    def written(self) -> tuple[tuple[int, RegisterState], ...]:
        return tuple(enumerate(self.registers))

    def extends(self, other: ServerState) -> bool:
        return self.registers[: len(other.registers)] == other.registers


def _nil_fill(st: ServerState, r: int) -> ServerState:
    gap = r - len(st.registers)
    if gap <= 0:
        return st
    return ServerState(st.registers + (NIL,) * gap)


def server_handle_p1a(st: ServerState, r: int) -> tuple[ServerState, P1b]:
    if r >= len(st.registers):
        st = _nil_fill(st, r)
    return st, P1b(r, st.written())


def server_handle_p2a(st: ServerState, r: int, v: Value) -> tuple[ServerState, P2b | None]:
    if r < len(st.registers):
        return st, None
    st = ServerState(_nil_fill(st, r).registers + (Written(v),))
    return st, P2b(r, v)


# -- clients ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Idle:
    def __str__(self) -> str:
        return "idle"


@dataclass(frozen=True, slots=True)
class Phase1:
    r: int

    def __str__(self) -> str:
        return f"phase1 r={self.r}"


@dataclass(frozen=True, slots=True)
class Phase2:
    r: int
    v: Value

    def __str__(self) -> str:
        return f"phase2 r={self.r} v={self.v}"


@dataclass(frozen=True, slots=True)
class Done:
    v: Value

    def __str__(self) -> str:
        return f"done v={self.v}"


Phase = Union[Idle, Phase1, Phase2, Done]
IDLE = Idle()

GENERALISED = "generalised"
FIGURE6 = "figure6"
STRATEGIES = (GENERALISED, FIGURE6)

# Mutants, one per safety rule: 1 outputs on the first P2b, 2 writes a
# fabricated value, 3 ignores set allocation, 4 skips phase one.
MUTATIONS = (1, 2, 3, 4)
FABRICATED = "Zfab"


@dataclass(frozen=True)
class ClientSession:
    cid: int
    knowledge: ClientKnowledge
    phase: Phase = IDLE
    attempts: int = 0
    responders: frozenset[int] = frozenset()
    first_set: int = 0
    strategy: str = GENERALISED
    mutations: frozenset[int] = field(default=frozenset(), repr=False)

    def __hash__(self) -> int:
        # sessions are hashed constantly by the explorer; cache it
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.cid, self.knowledge, self.phase, self.attempts, self.responders))
            object.__setattr__(self, "_hash", h)
        return h

    @property
    def cfg(self) -> Configuration:
        return self.knowledge.cfg

    @property
    def output(self) -> Value | None:
        return self.phase.v if isinstance(self.phase, Done) else None


def new_session(
    cfg: Configuration,
    cid: int,
    input_value: Value,
    *,
    first_set: int = 0,
    strategy: str = GENERALISED,
    mutations=(),
) -> ClientSession:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    bad = set(mutations) - set(MUTATIONS)
    if bad:
        raise ValueError(f"unknown mutations {sorted(bad)}")
    return ClientSession(
        cid,
        initial_knowledge(cfg, input_value),
        first_set=first_set,
        strategy=strategy,
        mutations=frozenset(mutations),
    )


class Step(NamedTuple):
    session: ClientSession
    sends: tuple[tuple[int, Message], ...] = ()
    # (r, v, may_write held) for every P2a broadcast in this step
    writes: tuple[tuple[int, Value, bool], ...] = ()


def _broadcast(cfg: Configuration, msg: Message) -> tuple[tuple[int, Message], ...]:
    return tuple((s, msg) for s in range(cfg.servers))


def _eligible(sess: ClientSession, r: int) -> bool:
    cfg, k = sess.cfg, sess.knowledge
    if cfg.is_fast(r):
        return not k.state_table.row(r)
    if r in k.used_register_sets:
        return False
    return 3 in sess.mutations or cfg.allocated_client(r) == sess.cid


def select_register_set(sess: ClientSession) -> int:
    for r in range(sess.first_set, sess.cfg.max_register_sets):
        if _eligible(sess, r):
            return r
    raise NoEligibleRegisterSet(
        f"C{sess.cid}: no usable register set below {sess.cfg.max_register_sets}"
    )


def _decided(sess: ClientSession) -> ClientSession | None:
    v = output_value(sess.knowledge)
    if v is None:
        return None
    return replace(sess, phase=Done(v), responders=frozenset())


def _enter_phase2(sess: ClientSession, r: int, v: Value) -> Step:
    if 2 in sess.mutations:
        v = FABRICATED
    ok = may_write(sess.knowledge, sess.cid, r, v)
    k = sess.knowledge
    if not sess.cfg.is_fast(r):
        k = k.with_used(r)  # write-ahead, before any P2a leaves
    sess = replace(sess, knowledge=k, phase=Phase2(r, v), responders=frozenset())
    return Step(sess, _broadcast(sess.cfg, P2a(r, v)), ((r, v, ok),))


def _greatest_value(sess: ClientSession) -> Value:
    written = [(r, st.value) for r, _, st in sess.knowledge.state_table.cells()
               if isinstance(st, Written)]
    return max(written)[1] if written else sess.knowledge.input_value


def _try_complete_phase1(sess: ClientSession) -> Step:
    r = sess.phase.r
    if 4 in sess.mutations:
        return _enter_phase2(sess, r, sess.knowledge.input_value)
    if sess.strategy == FIGURE6:
        if not any(q <= sess.responders for q in sess.cfg.phase1(r)):
            return Step(sess)
        return _enter_phase2(sess, r, _greatest_value(sess))
    v = choose_value(sess.knowledge, r)
    if v is UNDETERMINED or not _allowed(sess, r, v):
        return Step(sess)
    return _enter_phase2(sess, r, v)


def _allowed(sess: ClientSession, r: int, v: Value) -> bool:
    owner = sess.cfg.allocated_client(r) if 3 in sess.mutations else sess.cid
    return may_write(sess.knowledge, owner, r, v)


def client_start_phase1(sess: ClientSession, cfg: Configuration | None = None) -> Step:
    """Pick a register set and begin phase one (or go straight to phase two)."""
    if isinstance(sess.phase, Done):
        return Step(sess)
    if sess.strategy == GENERALISED and (done := _decided(sess)) is not None:
        return Step(done)
    r = select_register_set(sess)
    sess = replace(sess, phase=Phase1(r), attempts=sess.attempts + 1, responders=frozenset())
    if sess.strategy == GENERALISED or 4 in sess.mutations:
        step = _try_complete_phase1(sess)
        if isinstance(step.session.phase, Phase2):
            return step
    return Step(sess, _broadcast(sess.cfg, P1a(r)))


def learn(k: ClientKnowledge, s: int, msg: Message) -> ClientKnowledge:
    """Fold what a reply from server ``s`` reveals into ``k``."""
    match msg:
        case P1b():
            return _fold_p1b(k, s, msg)
        case P2b(r=r, v=v):
            return apply_read(k, r, s, Written(v))
    return k


def _fold_p1b(k: ClientKnowledge, s: int, msg: P1b) -> ClientKnowledge:
    seen = set()
    for i, st in msg.registers:
        k = apply_read(k, i, s, st)
        seen.add(i)
    # the server's column is nil-fill closed, so absent indices below r are nil
    for i in range(msg.r):
        if i not in seen:
            k = apply_read(k, i, s, NIL)
    return k


def client_handle_p1b(sess: ClientSession, s: int, msg: P1b) -> Step:
    if isinstance(sess.phase, Done):
        return Step(sess)
    sess = replace(sess, knowledge=_fold_p1b(sess.knowledge, s, msg))
    current = isinstance(sess.phase, Phase1) and sess.phase.r == msg.r
    if current:
        sess = replace(sess, responders=sess.responders | {s})
    if sess.strategy == GENERALISED and (done := _decided(sess)) is not None:
        return Step(done)
    if current:
        return _try_complete_phase1(sess)
    return Step(sess)


def client_handle_p2b(sess: ClientSession, s: int, msg: P2b) -> Step:
    if isinstance(sess.phase, Done):
        return Step(sess)
    sess = replace(sess, knowledge=apply_read(sess.knowledge, msg.r, s, Written(msg.v)))
    current = isinstance(sess.phase, Phase2) and sess.phase.r == msg.r
    if current:
        sess = replace(sess, responders=sess.responders | {s})
        if 1 in sess.mutations:
            return Step(replace(sess, phase=Done(msg.v)))
    if sess.strategy == FIGURE6:
        if current and any(q <= sess.responders for q in sess.cfg.phase2(msg.r)):
            return Step(replace(sess, phase=Done(msg.v)))
        return Step(sess)
    return Step(_decided(sess) or sess)


def client_timeout(sess: ClientSession) -> ClientSession:
    if isinstance(sess.phase, (Phase1, Phase2)):
        return replace(sess, phase=IDLE, responders=frozenset())
    return sess


def client_handle(sess: ClientSession, s: int, msg: Message) -> Step:
    match msg:
        case P1b():
            return client_handle_p1b(sess, s, msg)
        case P2b():
            return client_handle_p2b(sess, s, msg)
    raise TypeError(f"clients do not handle {type(msg).__name__}")


def server_handle(st: ServerState, msg: Message) -> tuple[ServerState, Message | None]:
    match msg:
        case P1a(r):
            return server_handle_p1a(st, r)
        case P2a(r, v):
            return server_handle_p2a(st, r, v)
    raise TypeError(f"servers do not handle {type(msg).__name__}")


def run_classic_paxos_flow(cfg: Configuration, inputs: dict[int, Value]) -> dict[int, Value]:
    """Run clients one after another over a reliable network.

    Each client runs the classic two-phase exchange to completion before the
    next one starts, so message order is fully determined.
    """
    if cfg.fast_sets(cfg.max_register_sets - 1):
        raise ValueError("classic flow needs client-restricted register sets only")
    servers = [ServerState() for _ in range(cfg.servers)]
    outputs = {}
    for cid in sorted(inputs):
        sess = new_session(cfg, cid, inputs[cid], strategy=FIGURE6)
        step = client_start_phase1(sess)
        queue = list(step.sends)
        sess = step.session
        while queue and not isinstance(sess.phase, Done):
            s, msg = queue.pop(0)
            servers[s], reply = server_handle(servers[s], msg)
            if reply is None:
                continue
            step = client_handle(sess, s, reply)
            sess = step.session
            queue.extend(step.sends)
        if not isinstance(sess.phase, Done):
            raise RuntimeError(f"C{cid} did not finish")
        outputs[cid] = sess.phase.v
    return outputs
