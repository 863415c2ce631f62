"""Database facade wiring the stores, the migrator and the query engine."""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .cypher import ast, parse
from .engine import Engine
from .history import AnchorPolicy, HistoricalStore, Segment
from .kv import OrderedKV
from .migration import Migrator
from .results import QueryResult
from .storage import ABSENT, CurrentStore, EdgeObject, VertexObject
from .timemodel import LogicalClock
from .txn import TransactionManager, TxnState

SNAPSHOT_NAME = "current.json"


@dataclass
class Config:
    store_dir: str | None = None
    anchor: AnchorPolicy = field(default_factory=AnchorPolicy)
    # None disables migration, 0 migrates after every commit, N > 0 runs a
    # background worker every N milliseconds
    gc_interval_ms: float | None = None
    retention_ms: int = 0
    fsync: bool = False


def parse_gc_interval(text):
    """``off`` -> None, otherwise a non-negative number of milliseconds."""
    if text is None:
        return None
    if isinstance(text, (int, float)):
        value = text
    else:
        if text.strip().lower() in ("off", "none", "inf"):
            return None
        value = float(text)
    if value < 0:
        raise ValueError("gc interval must be >= 0 or 'off'")
    return value


def _canon(value):
    if value is ABSENT:
        return ("<absent>",)
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, dict):
        return tuple(sorted((repr(_canon(k)), _canon(v)) for k, v in value.items()))
    if isinstance(value, (set, frozenset)):
        return tuple(sorted(repr(_canon(v)) for v in value))
    if isinstance(value, (list, tuple)):
        return tuple(_canon(v) for v in value)
    return (type(value).__name__, value)


class Database:
    def __init__(self, config: Config | None = None):
        self.config = config or Config()
        self.kv = OrderedKV(self.config.store_dir, fsync=self.config.fsync)
        self.history = HistoricalStore(self.kv, self.config.anchor)
        snapshot = self._read_snapshot()
        self.clock = LogicalClock(max(self.history.max_timestamp(), snapshot.get("clock", 0)))
        self.txm = TransactionManager(self.clock)
        # gids are never reused, including those only known from history
        self.store = CurrentStore(
            self.txm,
            first_vertex_gid=max(self.history.max_gid(Segment.V), snapshot.get("max_vertex", 0)) + 1,
            first_edge_gid=max(self.history.max_gid(Segment.E), snapshot.get("max_edge", 0)) + 1,
        )
        self._restore(snapshot)
        for gid in self.history.gids(Segment.V):
            for _, state in self.history.all_versions(Segment.V, gid):
                self.store.index_vertex(gid, state["props"])
        self.engine = Engine(self.store, self.history)
        self.migrator = Migrator(self.store, self.history)
        self._background = None
        interval = self.config.gc_interval_ms
        if interval == 0:
            self.txm.commit_hooks.append(lambda txn: self.collect_garbage())
        elif interval is not None:
            self._background = self.migrator.run_background(interval)

    # -- transactions -------------------------------------------------------

    def begin(self):
        return self.store.begin()

    def commit(self, txn) -> int:
        return self.store.commit(txn)

    def abort(self, txn) -> None:
        self.store.abort(txn)

    def now(self) -> int:
        return self.clock.peek()

    # -- statements ---------------------------------------------------------

    def execute(self, statement, params=None, txn=None, strict=False) -> QueryResult:
        """Run one statement; without ``txn`` it runs in its own transaction."""
        stmt = parse(statement) if isinstance(statement, str) else statement
        own = txn is None
        if own:
            txn = self.begin()
        try:
            result = self.engine.execute(stmt, txn, params, now=txn.start_ts, strict=strict)
        except BaseException:
            if own and txn.state is TxnState.ACTIVE:
                self.abort(txn)
            raise
        if own:
            result.summary["commit_ts"] = self.commit(txn)
        return result

    def query(self, statement, params=None, **kw):
        """Rows of a read statement."""
        return self.execute(statement, params, **kw).rows

    # -- maintenance --------------------------------------------------------

    def collect_garbage(self):
        result = self.migrator.collect_and_migrate()
        if self.config.retention_ms:
            self.history.purge(self.config.retention_ms, self.now())
        return result

    def purge(self, retention_ms=None, now=None) -> int:
        retention = self.config.retention_ms if retention_ms is None else retention_ms
        return self.history.purge(retention, self.now() if now is None else now)

    def stats(self) -> dict:
        vertices = self.store.vertex_objects()
        edges = self.store.edge_objects()
        chains = [o.chain_length() for o in vertices + edges]
        out = dict(self.history.stats())
        out.update({
            "vertices": sum(1 for v in vertices if v.alive),
            "edges": sum(1 for e in edges if e.alive),
            "undo_versions": sum(chains),
            "max_chain_length": max(chains, default=0),
            "pending_transactions": self.txm.pending_reclaim(),
            "versions_migrated": self.migrator.total_migrated,
            "gc_batches": self.migrator.batches,
            "anchor_policy": self.config.anchor.describe(),
            "clock": self.now(),
        })
        return out

    def state_hash(self) -> str:
        """Digest of every stored version: in-place parts, undo chains and history."""
        h = hashlib.sha256()
        for obj in sorted(self.store.vertex_objects(), key=lambda o: o.gid):
            with obj.lock:
                h.update(repr(("v", obj.gid, _canon(obj.labels), _canon(obj.props), obj.alive,
                               obj.vp_st, _canon(obj.out_edges), _canon(obj.in_edges),
                               obj.ve_st)).encode())
                chain = list(obj.chain())
            for u in chain:
                h.update(repr((u.action.value, u.part.value, u.st, u.ed, u.commit_ts,
                               _canon(u.delta))).encode())
        for obj in sorted(self.store.edge_objects(), key=lambda o: o.gid):
            with obj.lock:
                h.update(repr(("e", obj.gid, obj.src, obj.dst, obj.edge_type, _canon(obj.props),
                               obj.alive, obj.ep_st)).encode())
                chain = list(obj.chain())
            for u in chain:
                h.update(repr((u.action.value, u.part.value, u.st, u.ed, u.commit_ts,
                               _canon(u.delta))).encode())
        for key, value in self.kv.view().items():
            h.update(key)
            h.update(value)
        return h.hexdigest()

    # -- persistence --------------------------------------------------------

    @property
    def snapshot_path(self):
        if self.config.store_dir is None:
            return None
        return Path(self.config.store_dir) / SNAPSHOT_NAME

    def _read_snapshot(self) -> dict:
        path = self.snapshot_path
        if path is None or not path.exists():
            return {}
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def _restore(self, snapshot) -> None:
        store = self.store
        for gid, labels, props, alive, vp_st, out, inc, ve_st in snapshot.get("vertices", ()):
            obj = VertexObject(gid, frozenset(labels), props)
            obj.alive, obj.vp_st, obj.ve_st = alive, vp_st, ve_st
            obj.out_edges = {e: n for e, n in out}
            obj.in_edges = {e: n for e, n in inc}
            obj.last_commit_ts = max(vp_st, ve_st)
            store.vertices[gid] = obj
            store.index_vertex(gid, props)
        for gid, src, dst, edge_type, props, alive, ep_st in snapshot.get("edges", ()):
            obj = EdgeObject(gid, src, dst, edge_type, props)
            obj.alive, obj.ep_st = alive, ep_st
            obj.last_commit_ts = ep_st
            store.edges[gid] = obj

    def save_snapshot(self) -> None:
        """Migrate every undo version, then write the in-place state next to the log.

        Historical versions live in the log; the snapshot only carries the
        current parts, so it is taken once the chains are empty. Active
        transactions are aborted first.
        """
        path = self.snapshot_path
        if path is None:
            return
        for txn in list(self.txm.active_transactions()):
            self.abort(txn)
        while self.migrator.collect_and_migrate().transactions:
            pass
        vertices = [[v.gid, sorted(v.labels), v.props, v.alive, v.vp_st,
                     sorted(v.out_edges.items()), sorted(v.in_edges.items()), v.ve_st]
                    for v in sorted(self.store.vertex_objects(), key=lambda o: o.gid)]
        edges = [[e.gid, e.src, e.dst, e.edge_type, e.props, e.alive, e.ep_st]
                 for e in sorted(self.store.edge_objects(), key=lambda o: o.gid)]
        body = {
            "clock": self.now(),
            "max_vertex": max((v[0] for v in vertices), default=0),
            "max_edge": max((e[0] for e in edges), default=0),
            "vertices": vertices,
            "edges": edges,
        }
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(body, fh)
            fh.flush()
            if self.config.fsync:
                os.fsync(fh.fileno())
        os.replace(tmp, path)

    def stop_background(self) -> None:
        """Stop the interval migration worker, letting an in-flight batch finish."""
        if self._background is not None:
            self._background.stop()
            self._background = None

    def close(self) -> None:
        self.stop_background()
        if not self.kv.closed:
            self.save_snapshot()
        self.kv.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def is_write(stmt) -> bool:
    return isinstance(stmt, ast.WRITE_STATEMENTS)
