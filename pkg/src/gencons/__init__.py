"""Distributed consensus over write-once registers."""

from gencons.config import (
    CLASSIC,
    FAST,
    Configuration,
    RegisterSetConfig,
    Rule,
    check_classic_paxos,
    check_fast,
    check_weakened,
    preset,
)
from gencons.core import NIL, UNWRITTEN, StateTable, Written
from gencons.decision import (
    ClientKnowledge,
    DecisionState,
    apply_read,
    choose_value,
    derive_decision_table,
    initial_knowledge,
    may_write,
    output_value,
)
from gencons.kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CLASSIC",
    "FAST",
    "NIL",
    "UNWRITTEN",
    "ClientKnowledge",
    "Configuration",
    "DecisionState",
    "RegisterSetConfig",
    "Rule",
    "StateTable",
    "Written",
    "apply_read",
    "check_classic_paxos",
    "check_fast",
    "check_weakened",
    "choose_value",
    "derive_decision_table",
    "initial_knowledge",
    "may_write",
    "output_value",
    "preset",
]
