"""Multi-version current store.

Every vertex keeps its properties (VP part) and its adjacency (VE part)
versioned independently, so topology changes never create property
versions and vice versa. Edges keep an EP part. The in-place state is the
newest one; older versions hang off a per-object chain of undo versions,
each holding a reverse delta and the lifespan of the version it restores.

A transaction keeps at most one undo per (object, part); repeated writes to
the same part inside one transaction are folded into it so each committed
transaction yields exactly one version per part it touched.
"""

from __future__ import annotations

import enum
import itertools
import threading

from .codec import check_property_map
from .errors import EndpointMissing, ObjectMissing, TransactionClosed, WriteConflict
from .timemodel import INF, NEG_INF
from .txn import Transaction, TransactionManager, TxnState, txn_visible


class Part(enum.Enum):
    VP = "VP"
    EP = "EP"
    VE = "VE"


class Action(enum.Enum):
    VP_DELTA = "VP_DELTA"
    EP_DELTA = "EP_DELTA"
    VE_ADD = "VE_ADD"
    VE_REMOVE = "VE_REMOVE"
    CREATE_OBJECT = "CREATE_OBJECT"
    DELETE_OBJECT = "DELETE_OBJECT"


class _Absent:
    __slots__ = ()

    def __repr__(self):
        return "ABSENT"


ABSENT = _Absent()


class UndoVersion:
    """Reverse delta restoring the previous version of one part.

    ``delta`` is ``{"props": {key: old value or ABSENT}, "alive": bool?}``
    for property parts and an ordered list of ``(op, direction, edge, neighbor)``
    set-operations for VE parts. Both forms are idempotent, which lets a
    reader apply them to a copy taken slightly before the writer mutated.
    """

    __slots__ = ("action", "part", "obj", "delta", "st", "ed", "commit_ts", "txn", "next")

    def __init__(self, action, part, obj, delta, st, ed, txn):
        self.action = action
        self.part = part
        self.obj = obj
        self.delta = delta
        self.st = st
        self.ed = ed
        self.commit_ts = None
        self.txn = txn
        self.next = None

    @property
    def omega(self):
        return (self.st, self.ed)

    def stamp(self, ts: int) -> None:
        self.ed = ts
        self.commit_ts = ts

    def rollback(self) -> None:
        self.obj.rollback(self)

    def compose(self, older_first_delta, action) -> None:
        """Fold a later change made by the same transaction into this undo."""
        if self.part is Part.VE:
            self.delta = list(older_first_delta) + list(self.delta)
        else:
            props = dict(older_first_delta.get("props", {}))
            props.update(self.delta.get("props", {}))
            merged = {"props": props}
            if "alive" in self.delta:
                merged["alive"] = self.delta["alive"]
            elif "alive" in older_first_delta:
                merged["alive"] = older_first_delta["alive"]
            self.delta = merged
        if action is Action.DELETE_OBJECT and self.action is not Action.CREATE_OBJECT:
            self.action = action

    def __repr__(self):
        return (f"UndoVersion({self.action.value}, {self.obj.describe()}, "
                f"[{self.st}, {self.ed}), txn={self.txn.txn_id})")


def _apply_props_reverse(work, delta) -> None:
    props = work[1]
    for key, value in delta.get("props", {}).items():
        if value is ABSENT:
            props.pop(key, None)
        else:
            props[key] = value
    if "alive" in delta:
        work[0] = delta["alive"]


def _apply_ve_reverse(work, delta) -> None:
    for op, direction, edge, neighbor in delta:
        table = work[0] if direction == "out" else work[1]
        if op == "add":
            table[edge] = neighbor
        else:
            table.pop(edge, None)


class _GraphObject:
    __slots__ = ("gid", "lock", "head", "last_commit_ts", "writer", "discarded", "__weakref__")
    namespace = "?"

    def __init__(self, gid: int):
        self.gid = gid
        self.lock = threading.Lock()
        self.head = None
        self.last_commit_ts = 0
        self.writer = None
        self.discarded = False

    @property
    def key(self):
        return (self.namespace, self.gid)

    def describe(self) -> str:
        return f"{'vertex' if self.namespace == 'v' else 'edge'} {self.gid}"

    def chain(self):
        undo = self.head
        while undo is not None:
            yield undo
            undo = undo.next

    def chain_length(self) -> int:
        return sum(1 for _ in self.chain())

    def unlink(self, doomed) -> None:
        """Splice the undo versions in ``doomed`` out of the chain."""
        prev = None
        undo = self.head
        while undo is not None:
            nxt = undo.next
            if undo in doomed:
                if prev is None:
                    self.head = nxt
                else:
                    prev.next = nxt
            else:
                prev = undo
            undo = nxt


class VertexObject(_GraphObject):
    __slots__ = ("labels", "props", "alive", "vp_st", "out_edges", "in_edges", "ve_st")
    namespace = "v"

    def __init__(self, gid, labels, props):
        super().__init__(gid)
        self.labels = labels
        self.props = props
        self.alive = True
        self.vp_st = NEG_INF
        self.out_edges = {}
        self.in_edges = {}
        self.ve_st = NEG_INF

    def part_st(self, part):
        return self.vp_st if part is Part.VP else self.ve_st

    def stamp_part(self, part, ts):
        if part is Part.VP:
            self.vp_st = ts
        else:
            self.ve_st = ts

    def working_copy(self, part):
        if part is Part.VP:
            return [self.alive, dict(self.props)]
        return [dict(self.out_edges), dict(self.in_edges)]

    def materialize(self, part, work):
        if part is Part.VP:
            return {"labels": sorted(self.labels), "props": dict(work[1])}
        return {
            "out": sorted([e, n] for e, n in work[0].items()),
            "in": sorted([e, n] for e, n in work[1].items()),
        }

    def rollback(self, undo):
        with self.lock:
            if undo.action is Action.CREATE_OBJECT:
                self.alive = False
                self.discarded = True
            elif undo.part is Part.VP:
                work = [self.alive, self.props]
                _apply_props_reverse(work, undo.delta)
                self.alive = work[0]
                self.vp_st = undo.st
            else:
                _apply_ve_reverse([self.out_edges, self.in_edges], undo.delta)
                self.ve_st = undo.st
            self.unlink({undo})


class EdgeObject(_GraphObject):
    __slots__ = ("src", "dst", "edge_type", "props", "alive", "ep_st")
    namespace = "e"

    def __init__(self, gid, src, dst, edge_type, props):
        super().__init__(gid)
        self.src = src
        self.dst = dst
        self.edge_type = edge_type
        self.props = props
        self.alive = True
        self.ep_st = NEG_INF

    def part_st(self, part):
        return self.ep_st

    def stamp_part(self, part, ts):
        self.ep_st = ts

    def working_copy(self, part):
        return [self.alive, dict(self.props)]

    def materialize(self, part, work):
        return {"type": self.edge_type, "src": self.src, "dst": self.dst, "props": dict(work[1])}

    def rollback(self, undo):
        with self.lock:
            if undo.action is Action.CREATE_OBJECT:
                self.alive = False
                self.discarded = True
            else:
                work = [self.alive, self.props]
                _apply_props_reverse(work, undo.delta)
                self.alive = work[0]
                self.ep_st = undo.st
            self.unlink({undo})


def index_key(value):
    """Hashable key under which equal property values (1 == 1.0, True != 1) collide."""
    if isinstance(value, bool):
        return ("b", value)
    if isinstance(value, (int, float)):
        return ("n", value)
    return ("s", value)


def apply_reverse(part, work, delta) -> None:
    if part is Part.VE:
        _apply_ve_reverse(work, delta)
    else:
        _apply_props_reverse(work, delta)


def walk_versions(obj, part, reader: Transaction | None, counters=None):
    """Yield ``(st, ed, alive, work)`` for the versions of one part, newest first.

    Versions produced by transactions outside ``reader``'s snapshot are
    skipped; the first visible version is reported with ``ed = INF`` when the
    transaction that superseded it is not visible. ``work`` is a mutable
    scratch state that changes after the generator resumes; callers copy it
    through ``obj.materialize`` when they keep it. ``reader=None`` sees all
    committed and uncommitted versions.
    """
    with obj.lock:
        work = obj.working_copy(part)
        st = obj.part_st(part)
        undo = obj.head
    is_ve = part is Part.VE
    ed = INF
    visible = reader is None
    steps = 0
    try:
        while True:
            while undo is not None and (undo.part is not part):
                undo = undo.next
                steps += 1
            if not visible:
                producer = undo.txn if undo is not None else None
                visible = txn_visible(producer, reader)
            if visible and st < ed:
                yield st, ed, (True if is_ve else work[0]), work
            if undo is None:
                break
            apply_reverse(part, work, undo.delta)
            # the superseding transaction is this undo's writer
            ed = undo.ed if visible else INF
            st = undo.st
            steps += 1
            undo = undo.next
    finally:
        # callers often stop early; count the steps taken so far either way
        if counters is not None:
            counters["chain_steps"] += steps


def visible_version(obj, part, reader, counters=None):
    """The single version of ``part`` in ``reader``'s snapshot as ``(st, ed, alive, state)``."""
    for st, ed, alive, work in walk_versions(obj, part, reader, counters):
        return st, ed, alive, obj.materialize(part, work)
    return None


def reconstruct_at(obj, part, target=None):
    """Exact state of ``part`` for the version restored by undo ``target``.

    ``target=None`` returns the in-place state. Reverse deltas are applied
    from the in-place state down the chain until ``target`` is reached.
    """
    with obj.lock:
        work = obj.working_copy(part)
        undo = obj.head
    if target is None:
        return obj.materialize(part, work)
    while undo is not None:
        if undo.part is part:
            apply_reverse(part, work, undo.delta)
        if undo is target:
            return obj.materialize(part, work)
        undo = undo.next
    raise ObjectMissing(f"{target!r} is not in the chain of {obj.describe()}")


class CurrentStore:
    """Vertex and edge objects plus the five modification rules."""

    def __init__(self, txm: TransactionManager, first_vertex_gid: int = 1, first_edge_gid: int = 1):
        self.txm = txm
        self.vertices = {}
        self.edges = {}
        self._vids = itertools.count(first_vertex_gid)
        self._eids = itertools.count(first_edge_gid)
        self._gid_lock = threading.Lock()
        # (key, value) -> vertex gids that ever carried it; a superset used to
        # narrow exact-match scans, never trusted without re-checking versions
        self.vertex_index = {}

    def index_vertex(self, gid, props) -> None:
        for key, value in props.items():
            if value is not None:
                self.vertex_index.setdefault((key, index_key(value)), set()).add(gid)

    def index_candidates(self, key, value):
        return self.vertex_index.get((key, index_key(value)), ())

    # -- lookup -----------------------------------------------------------

    def vertex(self, gid):
        obj = self.vertices.get(gid)
        return None if obj is None or obj.discarded else obj

    def edge(self, gid):
        obj = self.edges.get(gid)
        return None if obj is None or obj.discarded else obj

    def vertex_objects(self):
        return [v for v in list(self.vertices.values()) if not v.discarded]

    def edge_objects(self):
        return [e for e in list(self.edges.values()) if not e.discarded]

    def _alive_for(self, obj, part, txn) -> bool:
        if obj is None:
            return False
        found = visible_version(obj, part, txn)
        return found is not None and found[2]

    # -- write protocol ---------------------------------------------------

    def _acquire(self, txn: Transaction, obj) -> None:
        if not txn.active:
            raise TransactionClosed(f"transaction {txn.txn_id} is {txn.state.value}")
        conflict = False
        with obj.lock:
            holder = obj.writer
            if holder is not None and holder is not txn and holder.state is TxnState.ACTIVE:
                conflict = True
            else:
                obj.writer = txn
                txn.objects[obj.key] = obj
                txn.write_set.add(obj.key)
        if conflict:
            self.abort(txn)
            raise WriteConflict(
                f"{obj.describe()} has uncommitted changes from another transaction"
            )

    def _record(self, txn, obj, part, action, reverse) -> None:
        """Push (or fold) the undo for ``part``; caller holds ``obj.lock``."""
        txn.touched.add((obj, part))
        if obj.key in txn.created:
            return
        slot = (obj.key, part)
        undo = txn.undo_index.get(slot)
        if undo is None:
            undo = UndoVersion(action, part, obj, reverse, obj.part_st(part), txn.start_ts, txn)
            undo.next = obj.head
            obj.head = undo
            txn.undo_buffer.append(undo)
            txn.undo_index[slot] = undo
        else:
            undo.compose(reverse, action)
        obj.stamp_part(part, txn.start_ts)

    def _register_created(self, txn, obj, part) -> None:
        undo = UndoVersion(Action.CREATE_OBJECT, part, obj, {"alive": False, "props": {}},
                           NEG_INF, txn.start_ts, txn)
        obj.head = undo
        obj.writer = txn
        obj.stamp_part(part, txn.start_ts)
        txn.objects[obj.key] = obj
        txn.write_set.add(obj.key)
        txn.created.add(obj.key)
        txn.undo_buffer.append(undo)
        txn.undo_index[(obj.key, part)] = undo
        txn.touched.add((obj, part))

    # -- operations -------------------------------------------------------

    def create_vertex(self, txn, labels=(), props=None) -> int:
        if not txn.active:
            raise TransactionClosed(f"transaction {txn.txn_id} is {txn.state.value}")
        labels = frozenset(labels)
        if not all(isinstance(x, str) and x for x in labels):
            raise ValueError("labels must be nonempty strings")
        props = check_property_map(props)
        with self._gid_lock:
            gid = next(self._vids)
        obj = VertexObject(gid, labels, props)
        self._register_created(txn, obj, Part.VP)
        self.vertices[gid] = obj
        self.index_vertex(gid, props)
        return gid

    def create_edge(self, txn, src, dst, edge_type, props=None) -> int:
        if not txn.active:
            raise TransactionClosed(f"transaction {txn.txn_id} is {txn.state.value}")
        if not isinstance(edge_type, str) or not edge_type:
            raise ValueError("edge type must be a nonempty string")
        props = check_property_map(props)
        src_obj, dst_obj = self.vertex(src), self.vertex(dst)
        for gid, obj in ((src, src_obj), (dst, dst_obj)):
            if not self._alive_for(obj, Part.VP, txn):
                raise EndpointMissing(f"vertex {gid} does not exist in this snapshot")
        with self._gid_lock:
            gid = next(self._eids)
        self._acquire(txn, src_obj)
        if dst_obj is not src_obj:
            self._acquire(txn, dst_obj)
        edge = EdgeObject(gid, src, dst, edge_type, props)
        self._register_created(txn, edge, Part.EP)
        self.edges[gid] = edge
        self._ve_change(txn, src_obj, [("add", "out", gid, dst)], Action.VE_ADD)
        self._ve_change(txn, dst_obj, [("add", "in", gid, src)], Action.VE_ADD)
        return gid

    def _ve_change(self, txn, vobj, changes, action) -> None:
        with vobj.lock:
            reverse = []
            for op, direction, edge, neighbor in changes:
                table = vobj.out_edges if direction == "out" else vobj.in_edges
                had = edge in table
                if op == "add":
                    reverse.insert(0, ("add" if had else "remove", direction, edge, table.get(edge)))
                    table[edge] = neighbor
                else:
                    if had:
                        reverse.insert(0, ("add", direction, edge, table[edge]))
                        del table[edge]
            self._record(txn, vobj, Part.VE, action, reverse)

    def update_properties(self, txn, gid, changes, kind="vertex") -> None:
        """Set (or, for None values, remove) properties on a vertex or edge."""
        obj = self.vertex(gid) if kind == "vertex" else self.edge(gid)
        part = Part.VP if kind == "vertex" else Part.EP
        if not self._alive_for(obj, part, txn):
            raise ObjectMissing(f"{kind} {gid} does not exist in this snapshot")
        changes = dict(changes or {})
        for key, value in changes.items():
            if not isinstance(key, str) or not key:
                raise ValueError("property names must be nonempty strings")
        check_property_map({k: v for k, v in changes.items() if v is not None})
        self._acquire(txn, obj)
        if part is Part.VP:
            self.index_vertex(gid, changes)
        action = Action.VP_DELTA if part is Part.VP else Action.EP_DELTA
        with obj.lock:
            reverse = {"props": {k: obj.props.get(k, ABSENT) for k in changes}}
            for key, value in changes.items():
                if value is None:
                    obj.props.pop(key, None)
                else:
                    obj.props[key] = value
            self._record(txn, obj, part, action, reverse)

    def delete_edge(self, txn, gid) -> None:
        edge = self.edge(gid)
        if not self._alive_for(edge, Part.EP, txn):
            raise ObjectMissing(f"edge {gid} does not exist in this snapshot")
        self._acquire(txn, edge)
        src_obj, dst_obj = self.vertex(edge.src), self.vertex(edge.dst)
        self._acquire(txn, src_obj)
        if dst_obj is not src_obj:
            self._acquire(txn, dst_obj)
        with edge.lock:
            reverse = {"props": dict(edge.props), "alive": True}
            edge.props.clear()
            edge.alive = False
            self._record(txn, edge, Part.EP, Action.DELETE_OBJECT, reverse)
        if src_obj is dst_obj:
            self._ve_change(txn, src_obj, [("remove", "out", gid, None), ("remove", "in", gid, None)],
                            Action.VE_REMOVE)
        else:
            self._ve_change(txn, src_obj, [("remove", "out", gid, None)], Action.VE_REMOVE)
            self._ve_change(txn, dst_obj, [("remove", "in", gid, None)], Action.VE_REMOVE)

    def delete_vertex(self, txn, gid) -> None:
        vobj = self.vertex(gid)
        if not self._alive_for(vobj, Part.VP, txn):
            raise ObjectMissing(f"vertex {gid} does not exist in this snapshot")
        self._acquire(txn, vobj)
        with vobj.lock:
            reverse = {"props": dict(vobj.props), "alive": True}
            vobj.props.clear()
            vobj.alive = False
            self._record(txn, vobj, Part.VP, Action.DELETE_OBJECT, reverse)
        adjacency = visible_version(vobj, Part.VE, txn)[3]
        incident = dict.fromkeys(e for e, _ in adjacency["out"] + adjacency["in"])
        for edge_gid in incident:
            if self._alive_for(self.edge(edge_gid), Part.EP, txn):
                self.delete_edge(txn, edge_gid)

    # -- transaction plumbing ---------------------------------------------

    def begin(self) -> Transaction:
        return self.txm.begin()

    def commit(self, txn) -> int:
        try:
            return self.txm.commit(txn)
        finally:
            if txn.state is TxnState.ABORTED:
                self._drop_created(txn)

    def abort(self, txn) -> None:
        self.txm.abort(txn)
        self._drop_created(txn)

    def _drop_created(self, txn) -> None:
        for namespace, gid in txn.created:
            table = self.vertices if namespace == "v" else self.edges
            obj = table.get(gid)
            if obj is not None and obj.discarded:
                del table[gid]
