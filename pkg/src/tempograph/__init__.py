"""Embedded temporal property graph store.

Current state lives in a multi-version in-memory store; superseded versions
migrate to an ordered key-value history as anchors plus forward deltas and
stay queryable with ``FOR TT AS OF t`` / ``FOR TT FROM t1 TO t2``.
"""

from .db import Config, Database
from .errors import (
    ConstraintError, CorruptChain, EndpointMissing, EvalError, InvalidRange, MalformedKey,
    ObjectMissing, OutOfOrder, ParseError, TempographError, WriteConflict,
)
from .history import AnchorPolicy
from .timemodel import INF, NEG_INF, Lifespan, TimeCondition, legal_check, refine_condition

__version__ = "0.1.0"

__all__ = [
    "Config", "Database", "AnchorPolicy", "INF", "NEG_INF", "Lifespan", "TimeCondition",
    "legal_check", "refine_condition", "ConstraintError", "CorruptChain", "EndpointMissing",
    "EvalError", "InvalidRange", "MalformedKey", "ObjectMissing", "OutOfOrder", "ParseError",
    "TempographError", "WriteConflict",
]
