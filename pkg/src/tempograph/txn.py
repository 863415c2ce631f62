"""Snapshot-isolation transactions over the current store.

Start and commit timestamps come from one logical clock. Write-write
conflicts follow first-committer-wins: a transaction that wrote an object
which another transaction committed after our start fails at commit. An
object that is still held by an uncommitted writer cannot be modified in
place, so that case is reported at write time instead.
"""

from __future__ import annotations

import enum
import itertools
import threading
from collections import deque

from .errors import TransactionClosed, WriteConflict
from .timemodel import INF, LogicalClock


class TxnState(enum.Enum):
    ACTIVE = "active"
    COMMITTED = "committed"
    ABORTED = "aborted"


class Transaction:
    __slots__ = (
        "txn_id", "start_ts", "commit_ts", "state", "undo_buffer",
        "write_set", "objects", "undo_index", "touched", "created",
    )

    def __init__(self, txn_id: int, start_ts: int):
        self.txn_id = txn_id
        self.start_ts = start_ts
        self.commit_ts = None
        self.state = TxnState.ACTIVE
        # undo versions in creation order; replayed backwards on abort
        self.undo_buffer = []
        self.write_set = set()
        self.objects = {}
        # (gid-namespace, gid, part) -> the single undo this txn keeps for that part
        self.undo_index = {}
        # parts whose in-place lifespan must be stamped at commit
        self.touched = set()
        self.created = set()

    @property
    def active(self) -> bool:
        return self.state is TxnState.ACTIVE

    @property
    def read_only(self) -> bool:
        return not self.write_set

    def __repr__(self):
        return (f"Transaction(id={self.txn_id}, start={self.start_ts}, "
                f"commit={self.commit_ts}, {self.state.value})")


def txn_visible(writer: Transaction | None, reader: Transaction) -> bool:
    """Whether changes made by ``writer`` are part of ``reader``'s snapshot."""
    if writer is None or writer is reader:
        return True
    return writer.state is TxnState.COMMITTED and writer.commit_ts <= reader.start_ts


def snapshot_visible(version_commit_ts, reader: Transaction, own_write: bool = False) -> bool:
    if own_write:
        return True
    return version_commit_ts is not None and version_commit_ts <= reader.start_ts


class TransactionManager:
    """Begin/commit/abort, the active table and the GC horizon."""

    def __init__(self, clock: LogicalClock | None = None):
        self.clock = clock or LogicalClock()
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._active = {}
        # committed writers whose undo buffers still await migration, in commit order
        self._reclaim = deque()
        self.commit_hooks = []

    def begin(self) -> Transaction:
        # The lock keeps a new snapshot from starting halfway through a commit.
        with self._lock:
            txn = Transaction(next(self._ids), self.clock.next())
            self._active[txn.txn_id] = txn
        return txn

    def active_transactions(self):
        with self._lock:
            return list(self._active.values())

    def gc_horizon(self) -> int:
        with self._lock:
            if not self._active:
                return INF
            return min(t.start_ts for t in self._active.values())

    def commit(self, txn: Transaction) -> int:
        if not txn.active:
            raise TransactionClosed(f"transaction {txn.txn_id} is {txn.state.value}")
        with self._lock:
            for obj in txn.objects.values():
                if obj.last_commit_ts > txn.start_ts:
                    conflict = obj
                    break
            else:
                conflict = None
            if conflict is None:
                ts = self.clock.next()
                for undo in txn.undo_buffer:
                    undo.stamp(ts)
                for obj, part in txn.touched:
                    obj.stamp_part(part, ts)
                for obj in txn.objects.values():
                    obj.last_commit_ts = ts
                    obj.writer = None
                txn.commit_ts = ts
                txn.state = TxnState.COMMITTED
                del self._active[txn.txn_id]
                if txn.undo_buffer:
                    self._reclaim.append(txn)
        if conflict is not None:
            self.abort(txn)
            raise WriteConflict(
                f"{conflict.describe()} was committed by another transaction "
                f"after transaction {txn.txn_id} started"
            )
        for hook in self.commit_hooks:
            hook(txn)
        return ts

    def abort(self, txn: Transaction) -> None:
        if txn.state is TxnState.ABORTED:
            return
        if not txn.active:
            raise TransactionClosed(f"transaction {txn.txn_id} is {txn.state.value}")
        for undo in reversed(txn.undo_buffer):
            undo.rollback()
        for obj in txn.objects.values():
            if obj.writer is txn:
                obj.writer = None
        txn.undo_buffer.clear()
        with self._lock:
            txn.state = TxnState.ABORTED
            self._active.pop(txn.txn_id, None)

    def reclaimable(self, horizon: int | None = None):
        """Committed transactions whose undo buffers no active snapshot needs."""
        if horizon is None:
            horizon = self.gc_horizon()
        with self._lock:
            return [t for t in self._reclaim if t.commit_ts < horizon]

    def release(self, txns) -> None:
        done = {t.txn_id for t in txns}
        with self._lock:
            self._reclaim = deque(t for t in self._reclaim if t.txn_id not in done)

    def pending_reclaim(self) -> int:
        return len(self._reclaim)
