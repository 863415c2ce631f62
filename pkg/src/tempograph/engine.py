"""Query execution: scan, filter, expand and produce over both stores.

A query without a temporal qualifier reads only the version visible to its
transaction snapshot and never touches historical storage. A temporal
query reads every version legal under its time condition from the current
store's chains and from historical storage, removing duplicates that a
concurrent migration batch can leave in both places.

Expansion follows the refinement rule: edges of a vertex version ``v`` are
read under ``f(C, v.ω)`` and their far endpoints under ``f(C, e.ω)``.
"""

from __future__ import annotations

from collections import Counter

from .cypher import ast
from .cypher.render import render_expr
from .errors import ConstraintError, EvalError
from .expr import Evaluator, values_equal
from .history import HistoricalStore, Segment
from .results import QueryResult, VersionResult
from .storage import CurrentStore, Part, visible_version, walk_versions
from .timemodel import INF, TimeCondition, covers, legal_check, refine_condition

COUNTER_NAMES = ("chain_steps", "anchors_seeked", "reconstructions", "deltas_applied", "hist_entries_touched")


class ExecContext:
    """Per-execution state: snapshot, time condition, parameters and counters."""

    def __init__(self, txn, cond=None, params=None, now=None, strict=False):
        self.txn = txn
        self.cond = cond
        self.strict = strict
        self.evaluator = Evaluator(params, now)
        self.counters = Counter({name: 0 for name in COUNTER_NAMES})
        self._cache = {}


def dedup(results):
    """Drop repeated versions (same object and lifespan), keeping the first seen.

    Callers list current-store versions first, so the current copy survives.
    """
    seen = set()
    out = []
    for r in results:
        if r.key not in seen:
            seen.add(r.key)
            out.append(r)
    return out


def _vertex_result(gid, st, ed, state, origin):
    return VersionResult("vertex", gid, st, ed, state["props"], tuple(state["labels"]), origin=origin)


def _edge_result(gid, st, ed, state, origin):
    return VersionResult("edge", gid, st, ed, state["props"], (), state["type"],
                         state["src"], state["dst"], origin)


class Engine:
    def __init__(self, store: CurrentStore, history: HistoricalStore):
        self.store = store
        self.history = history

    # -- version reads ------------------------------------------------------

    def _accept(self, omega, cond, ctx) -> bool:
        if ctx.strict:
            return covers(omega, cond)
        return legal_check(omega, cond)

    def _read(self, kind, gid, cond, ctx):
        """Versions of one vertex (VP) or edge (EP) legal under ``cond``; None = snapshot only."""
        slot = (kind, gid, cond)
        cached = ctx._cache.get(slot)
        if cached is not None:
            return cached
        if kind == "vertex":
            obj, part, segment, make = self.store.vertex(gid), Part.VP, Segment.V, _vertex_result
        else:
            obj, part, segment, make = self.store.edge(gid), Part.EP, Segment.E, _edge_result
        out = []
        if cond is None:
            if obj is not None:
                found = visible_version(obj, part, ctx.txn, ctx.counters)
                if found is not None and found[2]:
                    out.append(make(gid, found[0], found[1], found[3], "current"))
        else:
            covered = False
            if obj is not None:
                for st, ed, alive, work in walk_versions(obj, part, ctx.txn, ctx.counters):
                    if ed <= cond[0]:
                        break
                    if alive and self._accept((st, ed), cond, ctx):
                        out.append(make(gid, st, ed, obj.materialize(part, work), "current"))
                    if st <= cond[0]:
                        # reclaimed versions all end before this one starts
                        covered = True
                        break
            if not covered:
                # the view is taken after the chain pass: migration publishes
                # before it unlinks, so nothing can fall between the two reads
                for omega, state in self.fetch_from_kv(segment, gid, cond, ctx):
                    if not ctx.strict or covers(omega, cond):
                        out.append(make(gid, omega[0], omega[1], state, "historical"))
                out = dedup(out)
        ctx._cache[slot] = out
        return out

    def vertex_read(self, gid, cond, ctx):
        return self._read("vertex", gid, cond, ctx)

    def edge_read(self, gid, cond, ctx):
        return self._read("edge", gid, cond, ctx)

    def ve_read(self, gid, cond, ctx):
        """Adjacency versions of a vertex as ``(omega, {"out": [...], "in": [...]})``."""
        obj = self.store.vertex(gid)
        out = []
        if cond is None:
            if obj is not None:
                found = visible_version(obj, Part.VE, ctx.txn, ctx.counters)
                if found is not None:
                    out.append(((found[0], found[1]), found[3]))
            return out
        seen = set()
        if obj is not None:
            for st, ed, _, work in walk_versions(obj, Part.VE, ctx.txn, ctx.counters):
                if ed <= cond[0]:
                    break
                if legal_check((st, ed), cond):
                    seen.add((st, ed))
                    out.append(((st, ed), obj.materialize(Part.VE, work)))
                if st <= cond[0]:
                    return out
        for omega, state in self.fetch_from_kv(Segment.VE, gid, cond, ctx):
            if tuple(omega) not in seen:
                seen.add(tuple(omega))
                out.append((tuple(omega), state))
        return out

    def fetch_from_kv(self, segment, gid, cond, ctx):
        """Reclaimed versions of one object legal under ``cond``."""
        return self.history.fetch(segment, gid, cond, ctx.counters)

    def scan_gids(self, ctx, node: ast.NodePattern, env):
        """Candidate vertex gids for the first node of a pattern."""
        for key, expr in node.props:
            if key in ("_st", "_ed"):
                continue
            value = ctx.evaluator.eval(expr, env)
            if value is None:
                return []
            return sorted(self.store.index_candidates(key, value))
        gids = {v.gid for v in self.store.vertex_objects()}
        if ctx.cond is not None:
            gids |= self.history.gids(Segment.V)
        return sorted(gids)

    def expand_vertices(self, v: VersionResult, rel: ast.RelPattern, ctx):
        """``(edge version, neighbor version)`` pairs reachable from ``v`` through ``rel``."""
        cond = ctx.cond
        window = None if cond is None else refine_condition(cond, v.omega)
        if cond is not None and window is None:
            return []
        if ctx.strict and cond is not None:
            window = cond
        adjacency = {}
        for _, state in self.ve_read(v.gid, window, ctx):
            if rel.direction in ("out", "both"):
                for e, n in state["out"]:
                    adjacency.setdefault(e, n)
            if rel.direction in ("in", "both"):
                for e, n in state["in"]:
                    adjacency.setdefault(e, n)
        pairs = []
        for e_gid in sorted(adjacency):
            n_gid = adjacency[e_gid]
            for ev in self.edge_read(e_gid, window, ctx):
                if rel.type is not None and ev.type != rel.type:
                    continue
                n_window = None if cond is None else (cond if ctx.strict else refine_condition(cond, ev.omega))
                for nv in self.vertex_read(n_gid, n_window, ctx):
                    pairs.append((ev, nv))
        return pairs

    # -- matching -----------------------------------------------------------

    def _node_ok(self, node: ast.NodePattern, version, env, ctx) -> bool:
        if version.kind != "vertex":
            return False
        if node.labels and not set(node.labels) <= set(version.labels):
            return False
        return self._props_ok(node.props, version, env, ctx)

    def _props_ok(self, props, version, env, ctx) -> bool:
        for key, expr in props:
            if values_equal(version.get(key), ctx.evaluator.eval(expr, env)) is not True:
                return False
        return True

    def _bind(self, env, var, version):
        if var is None:
            return env
        bound = env.get(var)
        if bound is not None:
            return env if bound == version else None
        if var in env:
            return None
        new = dict(env)
        new[var] = version
        return new

    def match_pattern(self, pattern: ast.Pattern, env, ctx):
        first = pattern.nodes[0]
        if first.var is not None and first.var in env:
            bound = env[first.var]
            if not isinstance(bound, VersionResult):
                raise EvalError(f"{first.var!r} is not a vertex")
            starts = [bound]
        else:
            starts = []
            for gid in self.scan_gids(ctx, first, env):
                starts.extend(self.vertex_read(gid, ctx.cond, ctx))
        rows = []
        for v in starts:
            if not self._node_ok(first, v, env, ctx):
                continue
            row = self._bind(env, first.var, v)
            if row is not None:
                self._extend(pattern, 0, v, row, (), ctx, rows)
        return rows

    def _extend(self, pattern, i, current, env, used_edges, ctx, out):
        if i == len(pattern.rels):
            out.append(env)
            return
        rel, node = pattern.rels[i], pattern.nodes[i + 1]
        for ev, nv in self.expand_vertices(current, rel, ctx):
            # an edge appears at most once per match
            if ev.gid in used_edges:
                continue
            if not self._props_ok(rel.props, ev, env, ctx):
                continue
            row = self._bind(env, rel.var, ev)
            if row is None or not self._node_ok(node, nv, row, ctx):
                continue
            row = self._bind(row, node.var, nv)
            if row is None:
                continue
            self._extend(pattern, i + 1, nv, row, used_edges + (ev.gid,), ctx, out)

    def match(self, patterns, where, ctx):
        rows = [{}]
        for pattern in patterns:
            rows = [r for env in rows for r in self.match_pattern(pattern, env, ctx)]
        if where is not None:
            rows = [env for env in rows if ctx.evaluator.predicate(where, env)]
        return rows

    # -- statements ---------------------------------------------------------

    def time_condition(self, clause, ctx):
        ev = ctx.evaluator
        if isinstance(clause, ast.AsOf):
            return TimeCondition(ev.timestamp(clause.t))
        return TimeCondition(ev.timestamp(clause.t1), ev.timestamp(clause.t2))

    def execute(self, stmt, txn, params=None, now=None, strict=False) -> QueryResult:
        ctx = ExecContext(txn, None, params, now, strict)
        if isinstance(stmt, ast.MatchQuery):
            return self._execute_match(stmt, ctx)
        if isinstance(stmt, ast.CreateStmt):
            return self._execute_create(stmt, ctx)
        if isinstance(stmt, ast.SetStmt):
            return self._execute_set(stmt, ctx)
        if isinstance(stmt, ast.DeleteStmt):
            return self._execute_delete(stmt, ctx)
        raise EvalError(f"unsupported statement {type(stmt).__name__}")

    def _execute_match(self, stmt, ctx):
        columns = [item.alias or render_expr(item.expr) for item in stmt.returns]
        if stmt.temporal is not None:
            cond = self.time_condition(stmt.temporal, ctx)
            cutoff = self.history.retention_cutoff
            if cutoff > cond.t1:
                # versions that ended before the cutoff have been purged
                if cond.t2 < cutoff:
                    return QueryResult(columns, [], dict(ctx.counters))
                cond = TimeCondition(cutoff, cond.t2)
            ctx.cond = cond
        rows = []
        for env in self.match(stmt.patterns, stmt.where, ctx):
            rows.append(tuple(ctx.evaluator.eval(item.expr, env) for item in stmt.returns))
        return QueryResult(columns, rows, dict(ctx.counters))

    def _execute_create(self, stmt, ctx):
        envs = self.match(stmt.match, stmt.where, ctx) if stmt.match else [{}]
        summary = Counter(vertices_created=0, edges_created=0)
        for env in envs:
            env = dict(env)
            for pattern in stmt.patterns:
                nodes = []
                for node in pattern.nodes:
                    if node.var is not None and node.var in env:
                        if node.labels or node.props:
                            raise EvalError(f"{node.var!r} is already bound; it cannot be redeclared")
                        nodes.append(env[node.var])
                        continue
                    props = self._literal_props(node.props, env, ctx)
                    gid = self.store.create_vertex(ctx.txn, node.labels, props)
                    summary["vertices_created"] += 1
                    made = VersionResult("vertex", gid, ctx.txn.start_ts, INF, props, tuple(node.labels))
                    if node.var is not None:
                        env[node.var] = made
                    nodes.append(made)
                for rel, a, b in zip(pattern.rels, nodes, nodes[1:]):
                    if rel.direction == "both":
                        raise EvalError("CREATE needs a relationship direction")
                    if rel.type is None:
                        raise EvalError("CREATE needs a relationship type")
                    if rel.var is not None and rel.var in env:
                        raise EvalError(f"{rel.var!r} is already bound")
                    src, dst = (a, b) if rel.direction == "out" else (b, a)
                    props = self._literal_props(rel.props, env, ctx)
                    gid = self.store.create_edge(ctx.txn, src.gid, dst.gid, rel.type, props)
                    summary["edges_created"] += 1
                    if rel.var is not None:
                        env[rel.var] = VersionResult("edge", gid, ctx.txn.start_ts, INF, props, (),
                                                     rel.type, src.gid, dst.gid)
        return QueryResult([], [], dict(ctx.counters), dict(summary))

    def _literal_props(self, props, env, ctx):
        out = {}
        for key, expr in props:
            if key in ("_st", "_ed"):
                raise EvalError(f"{key} is derived from the lifespan and cannot be written")
            out[key] = ctx.evaluator.eval(expr, env)
        return {k: v for k, v in out.items() if v is not None}

    def _execute_set(self, stmt, ctx):
        envs = self.match(stmt.match, stmt.where, ctx)
        updates = 0
        for env in envs:
            for item in stmt.items:
                if item.key in ("_st", "_ed"):
                    raise EvalError(f"{item.key} is derived from the lifespan and cannot be written")
                target = env.get(item.var)
                if not isinstance(target, VersionResult):
                    raise EvalError(f"{item.var!r} is not a vertex or edge")
                value = ctx.evaluator.eval(item.expr, env)
                self.store.update_properties(ctx.txn, target.gid, {item.key: value}, target.kind)
                updates += 1
        return QueryResult([], [], dict(ctx.counters), {"properties_set": updates})

    def _execute_delete(self, stmt, ctx):
        envs = self.match(stmt.match, stmt.where, ctx)
        vertices, edges = {}, {}
        for env in envs:
            for var in stmt.vars:
                target = env.get(var)
                if not isinstance(target, VersionResult):
                    raise EvalError(f"{var!r} is not a vertex or edge")
                (vertices if target.kind == "vertex" else edges)[target.gid] = target
        deleted_edges = 0
        for gid in sorted(edges):
            if self.edge_read(gid, None, ExecContext(ctx.txn)):
                self.store.delete_edge(ctx.txn, gid)
                deleted_edges += 1
        deleted_vertices = 0
        for gid in sorted(vertices):
            fresh = ExecContext(ctx.txn)
            if not self.vertex_read(gid, None, fresh):
                continue
            if not stmt.detach:
                adjacency = self.ve_read(gid, None, fresh)
                if adjacency and (adjacency[0][1]["out"] or adjacency[0][1]["in"]):
                    raise ConstraintError(
                        f"vertex {gid} still has relationships; use DETACH DELETE"
                    )
            self.store.delete_vertex(ctx.txn, gid)
            deleted_vertices += 1
        return QueryResult([], [], dict(ctx.counters),
                           {"edges_deleted": deleted_edges, "vertices_deleted": deleted_vertices})
