"""Side-by-side runs of the engine and the reference oracle.

A check replays one seeded workload into a fresh database per migration
mode while the oracle records every commit, then compares the result
multisets of a fixed query set: point queries on every commit timestamp,
seeded random slice queries, and non-temporal queries on the final state.
"""

from __future__ import annotations

import random
import time
from collections import Counter
from dataclasses import dataclass, field

from .cypher import parse
from .db import Config, Database
from .history import AnchorPolicy
from .oracle import NaiveOracle
from .results import canonical_rows
from .workload import Loader, WorkloadConfig, generate_ops, group_ops

GC_MODES = ("none", "mid", "every")

POINT_QUERIES = (
    "MATCH (n) FOR TT AS OF $t RETURN n",
    "MATCH (a)-[e]->(b) FOR TT AS OF $t RETURN a, e, b",
)
SLICE_QUERIES = (
    "MATCH (n) FOR TT FROM $t1 TO $t2 RETURN n",
    "MATCH (a)-[e]->(b) FOR TT FROM $t1 TO $t2 RETURN a, e, b",
    "MATCH (a:User)-[e:Follows]-(b) WHERE a.score > 300 FOR TT FROM $t1 TO $t2 RETURN a.id, e.w, b",
    "MATCH (a:VIP)-[e:Follows]->(b)<-[f:Likes]-(c) FOR TT FROM $t1 TO $t2 RETURN a, e, b, f, c",
)
CURRENT_QUERIES = (
    "MATCH (n) RETURN n",
    "MATCH (a)-[e]-(b) RETURN a, e, b",
    "MATCH (n:User) WHERE n.score >= 500 RETURN n.id, n.name",
)


@dataclass
class Divergence:
    gc: str
    query: str
    params: dict
    engine_only: list
    oracle_only: list

    def reproducer(self, seed: int, ops: int) -> str:
        lines = [
            f"tempograph oracle-check --seed {seed} --ops {ops} --gc {self.gc}",
            f"  query:  {self.query}",
            f"  params: {self.params}",
        ]
        lines += [f"  engine only: {row}" for row in self.engine_only[:5]]
        lines += [f"  oracle only: {row}" for row in self.oracle_only[:5]]
        return "\n".join(lines)


@dataclass
class CheckReport:
    seed: int
    ops: int
    queries: int = 0
    divergences: list = field(default_factory=list)
    # largest hist_entries_touched seen on a query without a temporal clause
    current_hist_touched: int = 0
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.divergences


def slice_windows(rng: random.Random, last: int, count: int):
    windows = []
    for _ in range(count):
        a, b = rng.randint(0, last + 1), rng.randint(0, last + 1)
        windows.append((min(a, b), max(a, b)))
    return windows


def replay(ops, gc: str, oracle=None, anchor: AnchorPolicy | None = None) -> Database:
    """Load ``ops`` into a fresh in-memory database under migration mode ``gc``."""
    if gc not in GC_MODES:
        raise ValueError(f"unknown migration mode {gc!r}")
    config = Config(anchor=anchor or AnchorPolicy(), gc_interval_ms=0 if gc == "every" else None)
    db = Database(config)
    groups = sum(1 for _ in group_ops(ops))
    on_commit = None if oracle is None else oracle.apply
    Loader(db, on_commit=on_commit, gc_after={groups // 2} if gc == "mid" else ()).apply(ops)
    return db


def _compare(engine_rows, oracle_rows):
    a = Counter(canonical_rows(engine_rows))
    b = oracle_rows if isinstance(oracle_rows, Counter) else Counter(canonical_rows(oracle_rows))
    if a == b:
        return None
    return sorted((a - b).elements(), key=repr), sorted((b - a).elements(), key=repr)


def oracle_check(seed: int = 0, ops: int = 1000, query_count: int = 100, gc_modes=GC_MODES,
                 grid: bool = True, workload: dict | None = None, anchor: AnchorPolicy | None = None,
                 stop_at_first: bool = True) -> CheckReport:
    """Compare engine and oracle on one seeded workload; failures are data, not exceptions."""
    started = time.perf_counter()
    report = CheckReport(seed, ops)
    cfg = WorkloadConfig(ops=ops, seed=seed, **(workload or {}))
    stream = generate_ops(cfg)
    oracle = NaiveOracle()
    expected = {}

    def want(stmt, params):
        key = (id(stmt), tuple(sorted(params.items())))
        if key not in expected:
            expected[key] = Counter(canonical_rows(oracle.evaluate(stmt, params)))
        return expected[key]

    points = [parse(q) for q in POINT_QUERIES]
    slices = [parse(q) for q in SLICE_QUERIES]
    currents = [parse(q) for q in CURRENT_QUERIES]
    for mode in gc_modes:
        db = replay(stream, mode, oracle if not oracle.commits else None, anchor)
        last = oracle.commits[-1] if oracle.commits else 0
        plan = []
        if grid:
            plan += [(text, stmt, {"t": t}) for t in oracle.commits
                     for text, stmt in zip(POINT_QUERIES, points)]
        windows = slice_windows(random.Random(seed), last, query_count)
        plan += [(SLICE_QUERIES[i % len(slices)], slices[i % len(slices)], {"t1": t1, "t2": t2})
                 for i, (t1, t2) in enumerate(windows)]
        for text, stmt, params in plan:
            report.queries += 1
            diff = _compare(db.query(stmt, params), want(stmt, params))
            if diff is not None:
                report.divergences.append(Divergence(mode, text, params, *diff))
                if stop_at_first:
                    break
        for text, stmt in zip(CURRENT_QUERIES, currents):
            report.queries += 1
            result = db.execute(stmt)
            report.current_hist_touched = max(report.current_hist_touched,
                                              result.counters["hist_entries_touched"])
            diff = _compare(result.rows, oracle.evaluate(stmt))
            if diff is not None:
                report.divergences.append(Divergence(mode, text, {}, *diff))
        db.close()
        if report.divergences and stop_at_first:
            break
    report.elapsed = time.perf_counter() - started
    return report
