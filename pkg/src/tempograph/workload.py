"""Synthetic workloads: a seeded generator and a transactional loader.

A workload file holds one JSON object per line::

    {"txn_group": 3, "phase": "mix", "op": "update", "target": "v17",
     "changes": {"score": 41}}

Consecutive lines sharing a ``txn_group`` run in one transaction. Objects are
named by symbolic refs (``ref`` on creation, ``target``/``src``/``dst``
afterwards) that the loader binds to gids.

The mix phase uses exact quotas of updates, creates and deletes, shuffled
with the seed. Update targets follow a Zipf law over a seeded rank order of
objects; deletes pick uniformly among live objects outside the hottest ranks
so that the update distribution keeps its head.
"""

from __future__ import annotations

import bisect
import itertools
import json
import random
from dataclasses import dataclass

from .errors import ConstraintError, TempographError, WorkloadError
from .txn import TxnState

OPS = ("create_vertex", "create_edge", "update", "delete_vertex", "delete_edge")
EDGE_TYPES = ("Follows", "Likes")
HOT_RANKS = 5


@dataclass
class WorkloadConfig:
    ops: int = 1000
    initial_vertices: int = 60
    initial_edges: int = 120
    update_share: float = 0.8
    create_share: float = 0.1
    zipf: float = 1.1
    vertex_update_share: float = 0.75
    max_group: int = 3
    seed: int = 0

    def quotas(self):
        updates = round(self.ops * self.update_share)
        creates = round(self.ops * self.create_share)
        return updates, creates, self.ops - updates - creates


class _ZipfRanking:
    """Objects in a fixed seeded rank order; rank k is drawn with weight 1/k^s."""

    def __init__(self, skew: float):
        self.skew = skew
        self.order = []
        self._cum = []

    def add(self, ref):
        self.order.append(ref)
        k = len(self.order)
        prev = self._cum[-1] if self._cum else 0.0
        self._cum.append(prev + 1.0 / k ** self.skew)

    def draw(self, rng, live):
        for _ in range(1000):
            x = rng.random() * self._cum[-1]
            ref = self.order[bisect.bisect_right(self._cum, x)]
            if ref in live:
                return ref
        # almost everything is dead; fall back to the best-ranked live object
        return next(r for r in self.order if r in live)

    def hottest(self, live, n):
        return [r for r in self.order if r in live][:n]


class _Model:
    """Tracks which refs are alive so generated ops stay valid."""

    def __init__(self):
        self.vertices = {}  # ref -> set of incident edge refs
        self.edges = {}     # ref -> (src, dst)

    def create_vertex(self, ref):
        self.vertices[ref] = set()

    def create_edge(self, ref, src, dst):
        self.edges[ref] = (src, dst)
        self.vertices[src].add(ref)
        self.vertices[dst].add(ref)

    def delete_edge(self, ref):
        src, dst = self.edges.pop(ref)
        self.vertices[src].discard(ref)
        self.vertices[dst].discard(ref)

    def delete_vertex(self, ref):
        for e in list(self.vertices[ref]):
            self.delete_edge(e)
        del self.vertices[ref]


def generate_ops(cfg: WorkloadConfig):
    """The op stream as a list of dicts, deterministic for a given config."""
    rng = random.Random(cfg.seed)
    model = _Model()
    vrank, erank = _ZipfRanking(cfg.zipf), _ZipfRanking(cfg.zipf)
    vids, eids = itertools.count(1), itertools.count(1)
    ops = []

    def vertex_op():
        ref = f"v{next(vids)}"
        model.create_vertex(ref)
        labels = ["User"] + (["VIP"] if rng.random() < 0.2 else [])
        n = int(ref[1:])
        props = {"id": n, "name": f"user{n}", "score": rng.randint(0, 1000)}
        return {"op": "create_vertex", "ref": ref, "labels": labels, "props": props}

    def edge_op():
        ref = f"e{next(eids)}"
        live = sorted(model.vertices, key=lambda r: int(r[1:]))
        src, dst = rng.choice(live), rng.choice(live)
        model.create_edge(ref, src, dst)
        return {"op": "create_edge", "ref": ref, "src": src, "dst": dst,
                "type": rng.choice(EDGE_TYPES), "props": {"w": rng.randint(1, 100)}}

    def update_op():
        if not model.vertices:
            raise WorkloadError("graph too small: no live object to update")
        use_vertex = not model.edges or rng.random() < cfg.vertex_update_share
        if use_vertex:
            target = vrank.draw(rng, model.vertices)
            key = rng.choice(("score", "score", "status", "tag"))
            if key == "tag" and rng.random() < 0.3:
                value = None
            elif key == "status":
                value = rng.choice(("active", "idle", "away"))
            else:
                value = rng.randint(0, 1000)
            return {"op": "update", "kind": "vertex", "target": target, "changes": {key: value}}
        target = erank.draw(rng, model.edges)
        return {"op": "update", "kind": "edge", "target": target, "changes": {"w": rng.randint(1, 100)}}

    def delete_op():
        hot_v = set(vrank.hottest(model.vertices, HOT_RANKS))
        hot_e = set(erank.hottest(model.edges, HOT_RANKS))
        cand_v = sorted((r for r in model.vertices if r not in hot_v), key=lambda r: int(r[1:]))
        cand_e = sorted((r for r in model.edges if r not in hot_e), key=lambda r: int(r[1:]))
        if cand_e and (not cand_v or rng.random() < 0.5):
            target = rng.choice(cand_e)
            model.delete_edge(target)
            return {"op": "delete_edge", "target": target}
        if not cand_v:
            raise WorkloadError("graph too small: nothing left to delete outside the hot set")
        target = rng.choice(cand_v)
        model.delete_vertex(target)
        return {"op": "delete_vertex", "target": target}

    load = [vertex_op() for _ in range(cfg.initial_vertices)]
    if cfg.initial_vertices:
        load += [edge_op() for _ in range(cfg.initial_edges)]
    # the hot set is a seeded permutation of the initial graph
    initial_v = [op["ref"] for op in load if op["op"] == "create_vertex"]
    initial_e = [op["ref"] for op in load if op["op"] == "create_edge"]
    rng.shuffle(initial_v)
    rng.shuffle(initial_e)
    for ref in initial_v:
        vrank.add(ref)
    for ref in initial_e:
        erank.add(ref)

    updates, creates, deletes = cfg.quotas()
    kinds = ["update"] * updates + ["create"] * creates + ["delete"] * deletes
    rng.shuffle(kinds)
    mix = []
    for kind in kinds:
        if kind == "update":
            mix.append(update_op())
        elif kind == "create":
            if not model.vertices or rng.random() < 0.5:
                op = vertex_op()
                vrank.add(op["ref"])
            else:
                op = edge_op()
                erank.add(op["ref"])
            mix.append(op)
        else:
            mix.append(delete_op())

    group = 0
    for phase, stream in (("load", load), ("mix", mix)):
        i = 0
        while i < len(stream):
            size = rng.randint(1, cfg.max_group)
            for op in stream[i:i + size]:
                op["txn_group"] = group
                op["phase"] = phase
                ops.append(op)
            i += size
            group += 1
    return ops


def dump_ops(ops, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for op in ops:
            fh.write(json.dumps(op, sort_keys=True) + "\n")


def write_workload(cfg: WorkloadConfig, path) -> int:
    ops = generate_ops(cfg)
    dump_ops(ops, path)
    return len(ops)


_REQUIRED = {
    "create_vertex": ("ref",),
    "create_edge": ("ref", "src", "dst", "type"),
    "update": ("target", "changes"),
    "delete_vertex": ("target",),
    "delete_edge": ("target",),
}


def read_ops(path):
    """Parse a workload file; each op records its 1-based source line."""
    ops = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            try:
                op = json.loads(text)
            except json.JSONDecodeError as exc:
                raise WorkloadError(f"invalid JSON: {exc.msg}", lineno) from None
            validate_op(op, lineno)
            op["_line"] = lineno
            ops.append(op)
    return ops


def validate_op(op, line=None) -> None:
    if not isinstance(op, dict):
        raise WorkloadError("each line must be a JSON object", line)
    kind = op.get("op")
    if kind not in _REQUIRED:
        raise WorkloadError(f"unknown op {kind!r}", line)
    if "txn_group" not in op:
        raise WorkloadError("missing field 'txn_group'", line)
    for name in _REQUIRED[kind]:
        if name not in op:
            raise WorkloadError(f"{kind} is missing field {name!r}", line)


def group_ops(ops):
    """Split the stream into transactions of consecutive equal ``txn_group``."""
    for _, group in itertools.groupby(ops, key=lambda op: op["txn_group"]):
        yield list(group)


class Loader:
    """Applies op groups transactionally and binds refs to gids.

    ``on_commit(commit_ts, resolved_ops)`` observes every committed group;
    resolved ops carry gids instead of refs (this feeds the reference oracle).
    ``gc_after`` lists group indices after which a migration batch is forced.
    """

    def __init__(self, db, on_commit=None, gc_after=(), on_group=None):
        self.db = db
        self.refs = {}
        self.on_commit = on_commit
        self.on_group = on_group
        self.gc_after = set(gc_after)
        self.applied = 0
        self.groups = 0
        self.created = 0

    def _resolve(self, op, field, kind):
        ref = op[field]
        found = self.refs.get(ref)
        if found is None or found[0] != kind:
            raise WorkloadError(f"undefined {kind} reference {ref!r}", op.get("_line"))
        return found[1]

    def apply_group(self, group):
        db = self.db
        store = db.store
        txn = db.begin()
        resolved = []
        pending = {}
        try:
            for op in group:
                kind = op["op"]
                if kind == "create_vertex":
                    gid = store.create_vertex(txn, op.get("labels", ()), op.get("props", {}))
                    pending[op["ref"]] = ("vertex", gid)
                    self.refs.update(pending)
                    resolved.append(("create_vertex", gid, tuple(op.get("labels", ())), dict(op.get("props", {}))))
                elif kind == "create_edge":
                    src = self._resolve(op, "src", "vertex")
                    dst = self._resolve(op, "dst", "vertex")
                    gid = store.create_edge(txn, src, dst, op["type"], op.get("props", {}))
                    pending[op["ref"]] = ("edge", gid)
                    self.refs.update(pending)
                    resolved.append(("create_edge", gid, src, dst, op["type"], dict(op.get("props", {}))))
                elif kind == "update":
                    target_kind = op.get("kind") or self.refs.get(op["target"], ("vertex",))[0]
                    gid = self._resolve(op, "target", target_kind)
                    store.update_properties(txn, gid, op["changes"], target_kind)
                    resolved.append(("update", target_kind, gid, dict(op["changes"])))
                elif kind == "delete_vertex":
                    gid = self._resolve(op, "target", "vertex")
                    store.delete_vertex(txn, gid)
                    resolved.append(("delete_vertex", gid))
                else:
                    gid = self._resolve(op, "target", "edge")
                    store.delete_edge(txn, gid)
                    resolved.append(("delete_edge", gid))
            ts = db.commit(txn)
        except WorkloadError:
            self._rollback(txn, pending)
            raise
        except TempographError as exc:
            self._rollback(txn, pending)
            line = group[len(resolved)].get("_line") if len(resolved) < len(group) else None
            raise ConstraintError(exc.reason() + (f" (line {line})" if line else "")) from exc
        except (TypeError, ValueError) as exc:
            self._rollback(txn, pending)
            line = group[len(resolved)].get("_line") if len(resolved) < len(group) else None
            raise WorkloadError(str(exc), line) from exc
        self.applied += len(group)
        self.created += sum(1 for op in group if op["op"].startswith("create"))
        if self.on_commit is not None:
            self.on_commit(ts, resolved)
        if self.groups in self.gc_after:
            db.collect_garbage()
        self.groups += 1
        if self.on_group is not None:
            self.on_group(self.groups, ts)
        return ts

    def _rollback(self, txn, pending):
        if txn.state is TxnState.ACTIVE:
            self.db.abort(txn)
        for ref in pending:
            self.refs.pop(ref, None)

    def apply(self, ops) -> int:
        for group in group_ops(ops):
            self.apply_group(group)
        return self.applied


def load(db, path, **kw) -> int:
    """Apply a workload file to ``db``; returns the number of ops applied."""
    return Loader(db, **kw).apply(read_ops(path))
