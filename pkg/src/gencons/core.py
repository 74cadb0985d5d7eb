"""Value-semantic domain types: register contents and state tables."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Union

DEFAULT_MAX_REGISTER_SETS = 16

_TOKEN = re.compile(r"^[A-Za-z_][A-Za-z0-9_']*$")


class ConsensusError(Exception):
    """Base class for every error raised by this package."""


class WriteOnceViolation(ConsensusError):
    """A terminal register cell was observed with two different contents."""


class RegisterSetCapExceeded(ConsensusError):
    """A register-set index reached the run-level cap."""


Value = str
"""Opaque client payload.  Single tokens such as ``"A"``; never ``"nil"``."""


def check_value(v: object) -> Value:
    if not isinstance(v, str) or not _TOKEN.match(v) or v == "nil":
        raise ValueError(f"not a valid value token: {v!r}")
    return v


class Marker(enum.Enum):
    UNWRITTEN = "unwritten"
    NIL = "nil"

    def __repr__(self) -> str:
        return self.name


UNWRITTEN = Marker.UNWRITTEN
NIL = Marker.NIL


@dataclass(frozen=True, slots=True)
class Written:
    value: Value

    def __repr__(self) -> str:
        return f"Written({self.value!r})"


RegisterState = Union[Marker, Written]


def is_terminal(state: RegisterState) -> bool:
    return state is not UNWRITTEN


def format_state(state: RegisterState) -> str:
    if state is NIL:
        return "nil"
    if state is UNWRITTEN:
        return "."
    return state.value


def parse_state(text: str) -> RegisterState:
    if text in ("nil", "⊥"):
        return NIL
    if text in (".", ""):
        return UNWRITTEN
    return Written(check_value(text))


class StateTable:
    """Sparse, immutable map ``(register set, server) -> RegisterState``.

    Cells never recorded read as ``UNWRITTEN``.  ``record`` returns a new
    table; terminal cells can never change.
    """

    __slots__ = ("_cells", "max_register_sets", "_hash")

    def __init__(
        self,
        cells: Mapping[tuple[int, int], RegisterState] | None = None,
        max_register_sets: int = DEFAULT_MAX_REGISTER_SETS,
    ):
        self._cells: dict[tuple[int, int], RegisterState] = {}
        self.max_register_sets = max_register_sets
        self._hash: int | None = None
        for (r, s), v in (cells or {}).items():
            self._check_index(r, s)
            if v is UNWRITTEN:
                raise ValueError("cannot record UNWRITTEN")
            self._cells[(r, s)] = v

    def _check_index(self, r: int, s: int) -> None:
        if r < 0 or s < 0:
            raise ValueError(f"negative index ({r}, {s})")
        if r >= self.max_register_sets:
            raise RegisterSetCapExceeded(
                f"register set {r} exceeds cap of {self.max_register_sets}"
            )

    def get(self, r: int, s: int) -> RegisterState:
        return self._cells.get((r, s), UNWRITTEN)

    def record(self, r: int, s: int, v: RegisterState) -> StateTable:
        if v is UNWRITTEN:
            raise ValueError("cannot record UNWRITTEN")
        self._check_index(r, s)
        old = self._cells.get((r, s), UNWRITTEN)
        if old == v:
            return self
        if old is not UNWRITTEN:
            raise WriteOnceViolation(
                f"R{r} on S{s} holds {format_state(old)}, cannot become {format_state(v)}"
            )
        new = StateTable.__new__(StateTable)
        new._cells = dict(self._cells)
        new._cells[(r, s)] = v
        new.max_register_sets = self.max_register_sets
        new._hash = None
        return new

    def cells(self) -> Iterator[tuple[int, int, RegisterState]]:
        for (r, s), v in sorted(self._cells.items(), key=lambda kv: kv[0]):
            yield r, s, v

    def row(self, r: int) -> dict[int, RegisterState]:
        return {s: v for (rr, s), v in self._cells.items() if rr == r}

    @property
    def top(self) -> int:
        """Highest register-set index recorded, or -1 when empty."""
        return max((r for r, _ in self._cells), default=-1)

    def values(self) -> set[Value]:
        return {v.value for v in self._cells.values() if isinstance(v, Written)}

    def issubset(self, other: StateTable) -> bool:
        return all(other.get(r, s) == v for (r, s), v in self._cells.items())

    def __len__(self) -> int:
        return len(self._cells)

    def __contains__(self, key: tuple[int, int]) -> bool:
        return key in self._cells

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateTable):
            return NotImplemented
        return self._cells == other._cells

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._cells.items()))
        return self._hash

    def __repr__(self) -> str:
        body = ", ".join(f"R{r}S{s}={format_state(v)}" for r, s, v in self.cells())
        return f"StateTable({body})"

    @classmethod
    def from_rows(
        cls,
        rows: list[list[str]],
        max_register_sets: int = DEFAULT_MAX_REGISTER_SETS,
    ) -> StateTable:
        """Build a table from row-major text cells (``"."`` or ``""`` = unwritten)."""
        cells = {}
        for r, row in enumerate(rows):
            for s, text in enumerate(row):
                st = parse_state(text)
                if st is not UNWRITTEN:
                    cells[(r, s)] = st
        return cls(cells, max_register_sets)

    @classmethod
    def from_columns(
        cls,
        columns: Mapping[int, tuple[RegisterState, ...]],
        max_register_sets: int = DEFAULT_MAX_REGISTER_SETS,
    ) -> StateTable:
        cells = {}
        for s, col in columns.items():
            for r, st in enumerate(col):
                if st is not UNWRITTEN:
                    cells[(r, s)] = st
        return cls(cells, max_register_sets)


def server_name(s: int) -> str:
    return f"S{s}"


def client_name(c: int) -> str:
    return f"C{c}"


def parse_node(text: str) -> tuple[str, int]:
    m = re.fullmatch(r"([SC])(\d+)", text)
    if not m:
        raise ValueError(f"bad node name {text!r}")
    return m.group(1), int(m.group(2))
