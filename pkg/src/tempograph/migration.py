"""Moves reclaimable undo versions from the current store into history.

A batch takes every committed transaction whose commit timestamp lies
below the GC horizon, materializes the full state each of its undo versions
restores, publishes those states to the historical store in one atomic
batch and only then splices the undo versions out of their chains. A reader
racing with the batch may therefore see a version in both places; the query
engine removes such duplicates.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

from .errors import CorruptChain, TempographError
from .history import HistoricalStore, Segment
from .storage import Action, CurrentStore, Part, apply_reverse

log = logging.getLogger(__name__)

SEGMENT_OF = {Part.VP: Segment.V, Part.EP: Segment.E, Part.VE: Segment.VE}


@dataclass
class MigrationResult:
    versions_migrated: int = 0
    objects_touched: int = 0
    transactions: int = 0
    error: str | None = None


def _materialize(obj, part, targets):
    """``(undo, state)`` for every undo in ``targets``, oldest first.

    The chain is walked once from the in-place state applying reverse deltas.
    """
    wanted = set(targets)
    with obj.lock:
        work = obj.working_copy(part)
        undo = obj.head
    found = []
    while undo is not None and len(found) < len(wanted):
        if undo.part is part:
            apply_reverse(part, work, undo.delta)
            if undo in wanted:
                found.append((undo, obj.materialize(part, work)))
        undo = undo.next
    if len(found) != len(wanted):
        raise CorruptChain(f"{obj.describe()}: undo versions missing from the chain")
    found.reverse()
    return found


class Migrator:
    """Runs migration batches; at most one batch is in flight at a time."""

    def __init__(self, store: CurrentStore, history: HistoricalStore):
        self.store = store
        self.history = history
        self._lock = threading.Lock()
        self.total_migrated = 0
        self.batches = 0

    def collect_and_migrate(self) -> MigrationResult:
        with self._lock:
            return self._run_batch()

    def _run_batch(self) -> MigrationResult:
        txm = self.store.txm
        txns = txm.reclaimable()
        result = MigrationResult(transactions=len(txns))
        if not txns:
            return result
        groups = {}
        for txn in txns:
            for undo in txn.undo_buffer:
                slot = (undo.obj.key, undo.part)
                if slot not in groups:
                    groups[slot] = (undo.obj, undo.part, [])
                groups[slot][2].append(undo)
        try:
            with self.history.batch() as batch:
                for obj, part, undos in groups.values():
                    for undo, state in _materialize(obj, part, undos):
                        # the pre-creation state is not a version of anything
                        if undo.action is Action.CREATE_OBJECT or undo.st >= undo.ed:
                            continue
                        batch.put_version(SEGMENT_OF[part], obj.gid, (undo.st, undo.ed), state)
                        result.versions_migrated += 1
        except TempographError as exc:
            log.error("migration batch discarded: %s", exc)
            result.versions_migrated = 0
            result.error = exc.reason()
            return result
        touched = {}
        for obj, part, undos in groups.values():
            touched.setdefault(obj.key, (obj, set()))[1].update(undos)
        for obj, doomed in touched.values():
            with obj.lock:
                obj.unlink(doomed)
        txm.release(txns)
        result.objects_touched = len(touched)
        self.total_migrated += result.versions_migrated
        self.batches += 1
        return result

    def run_background(self, interval_ms: float) -> "BackgroundMigration":
        return BackgroundMigration(self, interval_ms)


class BackgroundMigration:
    """Calls ``collect_and_migrate`` every interval until ``stop``."""

    def __init__(self, migrator: Migrator, interval_ms: float):
        self.migrator = migrator
        self.interval = max(0.0, interval_ms) / 1000.0
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, name="tempograph-gc", daemon=True)
        self._thread.start()

    def _loop(self):
        while not self._stop.wait(self.interval):
            self.migrator.collect_and_migrate()

    def stop(self) -> None:
        """Stop the worker; an in-flight batch finishes first."""
        self._stop.set()
        self._thread.join()

    @property
    def running(self) -> bool:
        return self._thread.is_alive()
