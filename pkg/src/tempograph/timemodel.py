"""Time vocabulary: timestamps, lifespans, query windows and the logical clock.

Timestamps are unsigned 64-bit logical milliseconds. ``NEG_INF`` (0) and
``INF`` (2**64 - 1) are the reserved sentinels for -inf/+inf so that every
lifespan fits a fixed-width key.
"""

from __future__ import annotations

import threading
from collections import namedtuple

from .errors import InvalidRange

NEG_INF = 0
INF = 2**64 - 1


class Lifespan(namedtuple("Lifespan", "st ed")):
    """Half-open period ``[st, ed)`` during which one version was live."""

    __slots__ = ()

    def __new__(cls, st: int, ed: int = INF):
        if not (NEG_INF <= st < ed <= INF):
            raise ValueError(f"invalid lifespan [{st}, {ed})")
        return super().__new__(cls, st, ed)

    @property
    def is_current(self) -> bool:
        return self.ed == INF

    def contains(self, t: int) -> bool:
        return self.st <= t < self.ed

    def __repr__(self):
        ed = "inf" if self.ed == INF else self.ed
        st = "-inf" if self.st == NEG_INF else self.st
        return f"[{st}, {ed})"


class TimeCondition(namedtuple("TimeCondition", "t1 t2")):
    """Closed query window ``[t1, t2]``; ``t1 == t2`` for a time-point query."""

    __slots__ = ()

    def __new__(cls, t1: int, t2: int | None = None):
        if t2 is None:
            t2 = t1
        if not (NEG_INF <= t1 <= INF and NEG_INF <= t2 <= INF):
            raise InvalidRange(f"timestamp out of range in [{t1}, {t2}]")
        if t1 > t2:
            raise InvalidRange(f"time window start {t1} is after end {t2}")
        return super().__new__(cls, t1, t2)

    @property
    def is_point(self) -> bool:
        return self.t1 == self.t2


def legal_check(omega, cond) -> bool:
    """True when a version with lifespan ``omega`` is legal under ``cond``."""
    return omega[0] <= cond[1] and omega[1] > cond[0]


def refine_condition(cond, omega):
    """Narrow ``cond`` to the instants at which ``omega`` is live.

    The upper bound is clamped to ``omega.ed - 1`` because lifespans are
    half-open. Returns None when the two do not intersect.
    """
    t1 = max(cond[0], omega[0])
    t2 = min(cond[1], omega[1] - 1)
    if t1 > t2:
        return None
    return tuple.__new__(TimeCondition, (t1, t2))


def covers(omega, cond) -> bool:
    """Strict reading of a time slice: ``omega`` is live at every instant of ``cond``."""
    return omega[0] <= cond[0] and omega[1] > cond[1]


class LogicalClock:
    """Global commit clock; every call to :meth:`next` returns a fresh, larger value."""

    def __init__(self, start: int = 0):
        if not NEG_INF <= start < INF:
            raise ValueError("clock start out of range")
        self._value = start
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            if self._value >= INF - 1:
                raise OverflowError("logical clock exhausted")
            self._value += 1
            return self._value

    def peek(self) -> int:
        return self._value

    def advance_to(self, value: int) -> None:
        """Move the clock forward so later values exceed ``value`` (used on reopen)."""
        with self._lock:
            if value > self._value:
                self._value = value
