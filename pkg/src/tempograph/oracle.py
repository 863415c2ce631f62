"""Reference model: every committed version in plain lists, queried by brute force.

The oracle never sees undo chains, anchors or migration. It replays the
committed operation groups with their commit timestamps and answers MATCH
queries by scanning every version of every object. Interval reasoning is
done on closed integer ranges ``[st, ed - 1]`` rather than through the
engine's predicates.
"""

from __future__ import annotations

from .cypher import ast
from .errors import EvalError, InvalidRange
from .expr import Evaluator, values_equal
from .results import VersionResult
from .timemodel import INF


class _Versioned:
    __slots__ = ("gid", "versions", "state", "src", "dst", "type")

    def __init__(self, gid, src=None, dst=None, type=None):
        self.gid = gid
        self.versions = []  # [st, ed, state]
        self.state = None   # live state or None
        self.src, self.dst, self.type = src, dst, type


def _overlap(st, ed, lo, hi):
    """Closed intersection of the live instants ``[st, ed-1]`` with ``[lo, hi]``."""
    a, b = max(st, lo), min(ed - 1, hi)
    return (a, b) if a <= b else None


class NaiveOracle:
    def __init__(self):
        self.vertices = {}
        self.edges = {}
        self.incident = {}  # vertex gid -> edges touching it, in creation order
        self.commits = []

    # -- history ------------------------------------------------------------

    def apply(self, ts, ops) -> None:
        """Record one committed group of resolved ops at commit time ``ts``."""
        if self.commits and ts <= self.commits[-1]:
            raise ValueError("commit timestamps must increase")
        work = {}

        def current(table, gid):
            key = (table is self.vertices, gid)
            if key not in work:
                obj = table[gid]
                work[key] = None if obj.state is None else {
                    "labels": obj.state["labels"], "props": dict(obj.state["props"])}
            return work[key]

        for op in ops:
            kind = op[0]
            if kind == "create_vertex":
                _, gid, labels, props = op
                self.vertices[gid] = _Versioned(gid)
                work[(True, gid)] = {"labels": tuple(sorted(labels)),
                                     "props": {k: v for k, v in props.items() if v is not None}}
            elif kind == "create_edge":
                _, gid, src, dst, etype, props = op
                edge = self.edges[gid] = _Versioned(gid, src, dst, etype)
                self.incident.setdefault(src, []).append(edge)
                if dst != src:
                    self.incident.setdefault(dst, []).append(edge)
                work[(False, gid)] = {"labels": (), "props": {k: v for k, v in props.items() if v is not None}}
            elif kind == "update":
                _, target_kind, gid, changes = op
                table = self.vertices if target_kind == "vertex" else self.edges
                state = current(table, gid)
                for k, v in changes.items():
                    if v is None:
                        state["props"].pop(k, None)
                    else:
                        state["props"][k] = v
            elif kind == "delete_edge":
                current(self.edges, op[1])
                work[(False, op[1])] = None
            elif kind == "delete_vertex":
                gid = op[1]
                current(self.vertices, gid)
                work[(True, gid)] = None
                for e in self.incident.get(gid, ()):
                    if current(self.edges, e.gid) is not None:
                        work[(False, e.gid)] = None
            else:
                raise ValueError(f"unknown op {kind!r}")
        for (is_vertex, gid), state in work.items():
            obj = (self.vertices if is_vertex else self.edges)[gid]
            if obj.state is not None:
                obj.versions[-1][1] = ts
            if state is not None:
                obj.versions.append([ts, INF, state])
            obj.state = state
        self.commits.append(ts)

    def version_count(self) -> int:
        return sum(len(o.versions) for t in (self.vertices, self.edges) for o in t.values())

    # -- reads --------------------------------------------------------------

    def _result(self, obj, version, is_vertex):
        st, ed, state = version
        if is_vertex:
            return VersionResult("vertex", obj.gid, st, ed, dict(state["props"]), tuple(state["labels"]),
                                 origin="oracle")
        return VersionResult("edge", obj.gid, st, ed, dict(state["props"]), (), obj.type, obj.src, obj.dst,
                             origin="oracle")

    def _versions_in(self, obj, window, is_vertex, strict=False):
        out = []
        for version in obj.versions:
            st, ed, _ = version
            if window is None:
                ok = ed == INF
            elif strict:
                ok = st <= window[0] and ed - 1 >= window[1]
            else:
                ok = _overlap(st, ed, *window) is not None
            if ok:
                out.append(self._result(obj, version, is_vertex))
        return out

    def _neighbors(self, v, rel, window, strict):
        pairs = []
        for e in self.incident.get(v.gid, ()):
            if rel.type is not None and e.type != rel.type:
                continue
            if rel.direction == "out":
                ok, far = e.src == v.gid, e.dst
            elif rel.direction == "in":
                ok, far = e.dst == v.gid, e.src
            else:
                ok, far = v.gid in (e.src, e.dst), (e.dst if e.src == v.gid else e.src)
            if not ok:
                continue
            for ev in self._versions_in(e, window, False, strict):
                if window is None or strict:
                    n_window = window
                else:
                    n_window = _overlap(ev.st, ev.ed, self._cond[0], self._cond[1])
                for nv in self._versions_in(self.vertices[far], n_window, True, strict):
                    pairs.append((ev, nv))
        return pairs

    def evaluate(self, stmt, params=None, now=None, cutoff=0, strict=False):
        """Rows of a MATCH query, computed by scanning every stored version."""
        if not isinstance(stmt, ast.MatchQuery):
            raise EvalError("the oracle answers MATCH queries only")
        ev = Evaluator(params, now)
        cond = None
        if stmt.temporal is not None:
            if isinstance(stmt.temporal, ast.AsOf):
                t1 = t2 = ev.timestamp(stmt.temporal.t)
            else:
                t1, t2 = ev.timestamp(stmt.temporal.t1), ev.timestamp(stmt.temporal.t2)
                if t1 > t2:
                    raise InvalidRange(f"time window start {t1} is after end {t2}")
            if t2 < cutoff:
                return []
            cond = (max(t1, cutoff), t2)
        self._cond = cond
        envs = [{}]
        for pattern in stmt.patterns:
            envs = [out for env in envs for out in self._match(pattern, env, ev, cond, strict)]
        rows = []
        for env in envs:
            if ev.predicate(stmt.where, env):
                rows.append(tuple(ev.eval(item.expr, env) for item in stmt.returns))
        return rows

    def _node_ok(self, node, v, env, ev):
        if node.labels and not set(node.labels) <= set(v.labels):
            return False
        return all(values_equal(v.get(k), ev.eval(x, env)) is True for k, x in node.props)

    @staticmethod
    def _bind(env, var, value):
        if var is None:
            return env
        if var in env:
            return env if env[var] == value else None
        out = dict(env)
        out[var] = value
        return out

    def _match(self, pattern, env, ev, cond, strict):
        first = pattern.nodes[0]
        if first.var in env:
            starts = [env[first.var]]
        else:
            starts = [v for obj in self.vertices.values()
                      for v in self._versions_in(obj, cond, True, strict)]
        out = []

        def extend(i, current, env, used):
            if i == len(pattern.rels):
                out.append(env)
                return
            rel, node = pattern.rels[i], pattern.nodes[i + 1]
            if cond is None or strict:
                window = cond
            else:
                window = _overlap(current.st, current.ed, *cond)
            for e, n in self._neighbors(current, rel, window, strict):
                if e.gid in used:
                    continue
                if not all(values_equal(e.get(k), ev.eval(x, env)) is True for k, x in rel.props):
                    continue
                nxt = self._bind(env, rel.var, e)
                if nxt is None or not self._node_ok(node, n, nxt, ev):
                    continue
                nxt = self._bind(nxt, node.var, n)
                if nxt is not None:
                    extend(i + 1, n, nxt, used | {e.gid})

        for v in starts:
            if not isinstance(v, VersionResult) or v.kind != "vertex":
                raise EvalError(f"{first.var!r} is not a vertex")
            if not self._node_ok(first, v, env, ev):
                continue
            bound = self._bind(env, first.var, v)
            if bound is not None:
                extend(0, v, bound, frozenset())
        return out
