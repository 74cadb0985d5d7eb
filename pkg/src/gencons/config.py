"""Quorum configurations, client allocation and quorum-intersection checks."""

from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import InitVar, dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

from gencons import kernels
from gencons.core import DEFAULT_MAX_REGISTER_SETS, ConsensusError

MAX_SERVERS = 64

Quorum = frozenset  # frozenset[int] of server ids


class ConfigurationError(ConsensusError):
    pass


class UnknownPreset(ConfigurationError):
    pass


def quorum_key(q: Quorum) -> tuple[int, ...]:
    return tuple(sorted(q))


def format_quorum(q: Quorum) -> str:
    return "{" + ",".join(f"S{s}" for s in quorum_key(q)) + "}"


def quorum_mask(q: Quorum) -> int:
    m = 0
    for s in q:
        m |= 1 << s
    return m


def normalize_quorums(quorums: Iterable[Iterable[int]]) -> tuple[Quorum, ...]:
    qs = {frozenset(q) for q in quorums}
    return tuple(sorted(qs, key=quorum_key))


class RegisterSetMode(enum.Enum):
    CLIENT_RESTRICTED = "classic"
    QUORUM_INTERSECTING = "fast"


CLASSIC = RegisterSetMode.CLIENT_RESTRICTED
FAST = RegisterSetMode.QUORUM_INTERSECTING


def intersects(quorum_sets: Sequence[Iterable[Quorum]]) -> bool:
    """True iff every choice of one quorum per set has a common server."""
    return _first_disjoint([normalize_quorums(qs) for qs in quorum_sets]) is None


def _first_disjoint(sets: Sequence[Sequence[Quorum]]) -> tuple[Quorum, ...] | None:
    if len(sets) < 2:
        raise ValueError("intersects needs at least two quorum sets")
    if any(len(qs) == 0 for qs in sets):
        raise ValueError("quorum sets must be non-empty")
    hit = kernels.first_disjoint([[quorum_mask(q) for q in qs] for qs in sets])
    if hit is None:
        return None
    return tuple(sets[d][j] for d, j in enumerate(hit))


@dataclass(frozen=True)
class RegisterSetConfig:
    phase1: tuple[Quorum, ...]
    phase2: tuple[Quorum, ...]
    mode: RegisterSetMode = CLASSIC
    check: InitVar[bool] = True

    def __post_init__(self, check: bool) -> None:
        object.__setattr__(self, "phase1", normalize_quorums(self.phase1))
        object.__setattr__(self, "phase2", normalize_quorums(self.phase2))
        if not self.phase1 or not self.phase2:
            raise ConfigurationError("both quorum sets must be non-empty")
        for q in self.phase1 + self.phase2:
            if not q:
                raise ConfigurationError("quorums must be non-empty")
        if check and self.mode is FAST and not intersects([self.phase2, self.phase2]):
            raise ConfigurationError(
                "quorum-intersecting register set has disjoint phase-2 quorums"
            )

    @classmethod
    def same(cls, quorums: Iterable[Iterable[int]], mode: RegisterSetMode = CLASSIC,
             check: bool = True) -> RegisterSetConfig:
        qs = normalize_quorums(quorums)
        return cls(qs, qs, mode, check)

    @property
    def is_fast(self) -> bool:
        return self.mode is FAST

    @cached_property
    def phase2_masks(self) -> tuple[int, ...]:
        """Phase-2 quorums as server bitmasks, in ``phase2`` order."""
        return tuple(sum(1 << s for s in q) for q in self.phase2)


@dataclass(frozen=True)
class Rule:
    """Register sets ``start..stop`` (inclusive; ``stop=None`` is the tail).

    Set ``r`` uses ``cycle[(r - start) % len(cycle)]``, which expresses
    periodic layouts such as alternating quorums.
    """

    start: int
    stop: int | None
    cycle: tuple[RegisterSetConfig, ...]

    def __post_init__(self) -> None:
        if not self.cycle:
            raise ConfigurationError("rule without register-set config")
        if self.stop is not None and self.stop < self.start:
            raise ConfigurationError(f"empty range {self.start}..{self.stop}")

    def covers(self, r: int) -> bool:
        return r >= self.start and (self.stop is None or r <= self.stop)


@dataclass(frozen=True)
class Configuration:
    servers: int
    clients: int
    rules: tuple[Rule, ...]
    overrides: tuple[tuple[int, int], ...] = ()
    max_register_sets: int = DEFAULT_MAX_REGISTER_SETS
    name: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not 1 <= self.servers <= MAX_SERVERS:
            raise ConfigurationError(f"servers must be in 1..{MAX_SERVERS}")
        if self.clients < 0:
            raise ConfigurationError("negative client count")
        if self.max_register_sets < 1:
            raise ConfigurationError("max_register_sets must be positive")
        rules = tuple(sorted(self.rules, key=lambda rl: rl.start))
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "overrides", tuple(sorted(dict(self.overrides).items())))
        if not rules or rules[0].start != 0:
            raise ConfigurationError("rules must start at register set 0")
        for a, b in zip(rules, rules[1:]):
            if a.stop is None:
                raise ConfigurationError("only the last rule may be open-ended")
            if b.start <= a.stop:
                raise ConfigurationError(
                    f"overlapping ranges {a.start}..{a.stop} and {b.start}.."
                )
            if b.start != a.stop + 1:
                raise ConfigurationError(f"gap between {a.stop} and {b.start}")
        if rules[-1].stop is not None:
            raise ConfigurationError("the last rule must be open-ended (tail)")
        for rl in rules:
            for rc in rl.cycle:
                for q in rc.phase1 + rc.phase2:
                    if max(q) >= self.servers or min(q) < 0:
                        raise ConfigurationError(
                            f"quorum {format_quorum(q)} names unknown server"
                        )
        has_classic = any(rc.mode is CLASSIC for rl in rules for rc in rl.cycle)
        if has_classic and self.clients < 1:
            raise ConfigurationError("client-restricted sets need at least one client")
        for r, c in self.overrides:
            if not 0 <= c < self.clients:
                raise ConfigurationError(f"allocation names unknown client C{c}")
            if r < 0 or self.register_set(r).mode is not CLASSIC:
                raise ConfigurationError(f"allocation for R{r}, which is not client restricted")

    def __hash__(self) -> int:
        return self._hash

    @cached_property
    def _hash(self) -> int:
        return hash((self.servers, self.clients, self.rules, self.overrides,
                     self.max_register_sets))

    def _locate(self, r: int) -> tuple[int, int]:
        if r < 0:
            raise ValueError(f"negative register set {r}")
        for i, rl in enumerate(self.rules):
            if rl.covers(r):
                return i, (r - rl.start) % len(rl.cycle)
        raise AssertionError("rules do not cover every register set")

    def class_key(self, r: int) -> tuple[int, int]:
        """Identifies which rule entry governs ``r``; equal keys share quorums."""
        return self._locate(r)

    @cached_property
    def _sets(self) -> tuple[RegisterSetConfig, ...]:
        return tuple(self._lookup(r) for r in range(self.max_register_sets))

    def _lookup(self, r: int) -> RegisterSetConfig:
        i, j = self._locate(r)
        return self.rules[i].cycle[j]

    def register_set(self, r: int) -> RegisterSetConfig:
        if 0 <= r < self.max_register_sets:
            return self._sets[r]
        return self._lookup(r)

    def phase1(self, r: int) -> tuple[Quorum, ...]:
        return self.register_set(r).phase1

    def phase2(self, r: int) -> tuple[Quorum, ...]:
        return self.register_set(r).phase2

    def mode(self, r: int) -> RegisterSetMode:
        return self.register_set(r).mode

    def is_fast(self, r: int) -> bool:
        return self.register_set(r).mode is FAST

    @cached_property
    def periodic_bound(self) -> int:
        """Every pair of rule entries with ``r' < r`` first co-occurs below this."""
        tail = self.rules[-1]
        return tail.start + 2 * len(tail.cycle)

    def register_set_configs(self) -> list[RegisterSetConfig]:
        return [rc for rl in self.rules for rc in rl.cycle]

    def fast_sets(self, upto: int) -> list[int]:
        return [r for r in range(upto + 1) if self.is_fast(r)]

    def allocated_client(self, r: int) -> int | None:
        """The client owning client-restricted set ``r``; None for fast sets."""
        if self.is_fast(r):
            return None
        for rr, c in self.overrides:
            if rr == r:
                return c
        return r % self.clients

    def sets_of(self, client: int) -> list[int]:
        return [
            r for r in range(self.max_register_sets)
            if self.allocated_client(r) == client
        ]

    def __str__(self) -> str:
        return self.name or f"Configuration({self.servers} servers)"


def allocated_client(cfg: Configuration, r: int) -> int | None:
    return cfg.allocated_client(r)


# -- checks -----------------------------------------------------------------


@dataclass(frozen=True)
class Failure:
    clause: str
    r: int | None
    r_prime: int | None
    quorums: tuple[Quorum, ...]

    def __str__(self) -> str:
        where = []
        if self.r is not None:
            where.append(f"r={self.r}")
        if self.r_prime is not None:
            where.append(f"r'={self.r_prime}")
        where.append("disjoint")
        where.extend(format_quorum(q) for q in self.quorums)
        return f"{self.clause}: {' '.join(where)}"


@dataclass
class Report:
    check: str
    failures: list[Failure] = field(default_factory=list)
    clauses: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.passed

    def failure(self, clause: str) -> Failure | None:
        for f in self.failures:
            if f.clause == clause:
                return f
        return None

    @property
    def counterexample(self) -> Failure | None:
        return self.failures[0] if self.failures else None

    def lines(self) -> list[str]:
        out = [f"{self.check}: {'pass' if self.passed else 'FAIL'}"]
        for c in self.clauses:
            f = self.failure(c)
            out.append(f"  {c}: {'pass' if f is None else 'FAIL'}")
            if f is not None:
                out.append(f"    counterexample {f}")
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


def check_classic_paxos(cfg: Configuration) -> Report:
    """All quorums of every register set and phase must pairwise intersect."""
    every = normalize_quorums(
        q for rc in cfg.register_set_configs() for q in rc.phase1 + rc.phase2
    )
    report = Report("classic", clauses=("all-pairs",))
    hit = _first_disjoint([every, every])
    if hit is not None:
        report.failures.append(Failure("all-pairs", None, None, hit))
    return report


def _horizon(cfg: Configuration, max_r: int | None) -> int:
    limit = cfg.periodic_bound - 1
    if max_r is None:
        return limit
    if max_r < 0:
        raise ValueError("max_r must be non-negative")
    if max_r >= cfg.max_register_sets:
        raise ConfigurationError(
            f"max_r={max_r} beyond run cap {cfg.max_register_sets}"
        )
    return min(max_r, limit)


def _weakened_failure(cfg: Configuration, top: int, memo: dict) -> Failure | None:
    for r in range(1, top + 1):
        kr = cfg.class_key(r)
        for rp in range(r):
            key = ("w", kr, cfg.class_key(rp))
            if key not in memo:
                memo[key] = _first_disjoint([cfg.phase1(r), cfg.phase2(rp)])
            if memo[key] is not None:
                return Failure("weakened", r, rp, memo[key])
    return None


def check_weakened(cfg: Configuration, max_r: int | None = None) -> Report:
    """Phase-1 quorums of ``r`` meet phase-2 quorums of every ``r' < r``.

    With ``max_r=None`` the check covers all register sets: rules are
    eventually periodic, so every distinct pair appears below
    ``cfg.periodic_bound``.
    """
    report = Report("weakened", clauses=("weakened",))
    f = _weakened_failure(cfg, _horizon(cfg, max_r), {})
    if f is not None:
        report.failures.append(f)
    return report


def check_fast(cfg: Configuration, max_r: int | None = None) -> Report:
    top = _horizon(cfg, max_r)
    fast = cfg.fast_sets(top)
    clauses = ("weakened",) + (("fast-self", "fast-triple") if fast else ())
    report = Report("fast", clauses=clauses)
    memo: dict = {}
    f = _weakened_failure(cfg, top, memo)
    if f is not None:
        report.failures.append(f)
    for r in fast:
        key = ("s", cfg.class_key(r))
        if key not in memo:
            memo[key] = _first_disjoint([cfg.phase2(r), cfg.phase2(r)])
        if memo[key] is not None:
            report.failures.append(Failure("fast-self", r, None, memo[key]))
            break
    done = False
    for r in range(1, top + 1):
        for rp in fast:
            if rp >= r:
                break
            key = ("t", cfg.class_key(r), cfg.class_key(rp))
            if key not in memo:
                memo[key] = _first_disjoint([cfg.phase1(r), cfg.phase2(rp), cfg.phase2(rp)])
            if memo[key] is not None:
                report.failures.append(Failure("fast-triple", r, rp, memo[key]))
                done = True
                break
        if done:
            break
    return report


# -- presets ----------------------------------------------------------------


def majorities(members: Sequence[int]) -> tuple[Quorum, ...]:
    return of_size(members, len(members) // 2 + 1)


def of_size(members: Sequence[int], k: int) -> tuple[Quorum, ...]:
    if not 1 <= k <= len(members):
        raise ConfigurationError(f"quorum size {k} out of range for {len(members)} servers")
    return normalize_quorums(itertools.combinations(sorted(members), k))


def _halves(servers: int) -> tuple[list[int], list[int]]:
    if servers < 2 or servers % 2:
        raise ConfigurationError("this preset needs an even number of servers")
    h = servers // 2
    return list(range(h)), list(range(h, servers))


PRESETS = (
    "paxos-majority",
    "disjoint-pairs",
    "single-quorum-pairs",
    "fast-3of4",
    "colocated",
    "fixed-majority",
    "reconfigurable",
)

_PRESET_RE = re.compile(r"^([a-z0-9-]+?)(?:\((\d+)\))?$")


def preset(name: str, servers: int, clients: int,
           max_register_sets: int = DEFAULT_MAX_REGISTER_SETS) -> Configuration:
    """Build a named sample configuration.

    ``colocated(k)``, ``reconfigurable(k)`` and ``fast-3of4(k)`` take the
    register-set index where the layout switches; plain ``colocated`` is
    ``colocated(1)``, ``reconfigurable`` is ``reconfigurable(11)`` and plain
    ``fast-3of4`` makes every set fast.
    """
    m = _PRESET_RE.match(name.strip())
    if not m or m.group(1) not in PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    base, arg = m.group(1), m.group(2)
    k = int(arg) if arg is not None else None
    everyone = list(range(servers))

    def tail(start, *cycle):
        return Rule(start, None, tuple(cycle))

    def span(start, stop, rc):
        return Rule(start, stop, (rc,))

    if base in ("paxos-majority", "disjoint-pairs", "single-quorum-pairs", "fixed-majority") \
            and k is not None:
        raise UnknownPreset(f"preset {base} takes no parameter")

    if base == "paxos-majority":
        rules = [tail(0, RegisterSetConfig.same(majorities(everyone)))]
    elif base == "disjoint-pairs":
        lo, hi = _halves(servers)
        rules = [tail(0, RegisterSetConfig.same([lo, hi]))]
    elif base == "single-quorum-pairs":
        lo, hi = _halves(servers)
        rules = [tail(0, RegisterSetConfig.same([lo], FAST), RegisterSetConfig.same([hi], FAST))]
    elif base == "fast-3of4":
        fast = RegisterSetConfig.same(of_size(everyone, math.ceil(3 * servers / 4)), FAST)
        if k is None:
            rules = [tail(0, fast)]
        elif k == 0:
            rules = [tail(0, RegisterSetConfig.same(majorities(everyone)))]
        else:
            rules = [span(0, k - 1, fast), tail(k, RegisterSetConfig.same(majorities(everyone)))]
    elif base == "colocated":
        k = 1 if k is None else k
        maj = RegisterSetConfig.same(majorities(everyone))
        if k == 0:
            rules = [tail(0, maj)]
        else:
            rules = [span(0, k - 1, RegisterSetConfig.same([everyone])), tail(k, maj)]
    elif base == "fixed-majority":
        first = everyone[: servers // 2 + 1]
        rules = [span(0, 0, RegisterSetConfig.same([first], FAST)),
                 tail(1, RegisterSetConfig.same(majorities(everyone)))]
    else:  # reconfigurable
        k = 11 if k is None else k
        if servers < 2:
            raise ConfigurationError("reconfigurable needs at least two servers")
        primary, backup = everyone[: servers // 2], everyone[servers // 2:]
        back = RegisterSetConfig.same(majorities(backup))
        if k == 0:
            rules = [tail(0, back)]
        else:
            rules = [span(0, k - 1, RegisterSetConfig.same(majorities(primary))), tail(k, back)]
    label = base if k is None else f"{base}({k})"
    return Configuration(servers, clients, tuple(rules),
                         max_register_sets=max_register_sets, name=label)
