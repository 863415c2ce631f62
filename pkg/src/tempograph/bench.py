"""Benchmark harness: run a workload, then a temporal query mix, report CSV.

The workload phase times each committed transaction. The query phase runs
the four standard shapes (a user by id at a point or over a slice, and the
same with its outgoing edges) with seeded parameters and records latency
together with the engine's read counters. Migration is forced after fixed
groups so that counters and storage figures repeat exactly for a seed;
``gc_interval_ms`` additionally runs the background worker for timing runs.
"""

from __future__ import annotations

import csv
import io
import random
import statistics
import threading
import time
from collections import Counter
from dataclasses import dataclass, field

from .cypher import parse
from .db import Config, Database
from .history import AnchorPolicy
from .workload import Loader, WorkloadConfig, generate_ops, group_ops

CSV_COLUMNS = ("phase", "query_id", "p50_us", "p95_us", "mean_us", "hist_bytes", "anchors", "deltas",
               "chain_steps", "deltas_applied")

QUERY_TEMPLATES = {
    "Q1": "MATCH (n:User {id: $id}) FOR TT AS OF $t RETURN n",
    "Q2": "MATCH (n:User {id: $id}) FOR TT FROM $t1 TO $t2 RETURN n",
    "Q3": "MATCH (n:User {id: $id})-[e]->(m) FOR TT AS OF $t RETURN n, e, m",
    "Q4": "MATCH (n:User {id: $id})-[e]->(m) FOR TT FROM $t1 TO $t2 RETURN n, e, m",
}


@dataclass
class BenchConfig:
    tau1: float = 1000
    tau2: float = 10000
    c: float = 0.01
    anchor: str = "adaptive"
    gc_interval_ms: float | None = None
    # a migration batch is forced after every ``gc_every`` transactions and
    # once more when the workload ends; 0 forces only the final one
    gc_every: int = 50
    retention_ms: int = 0
    zipf: float = 1.1
    ops: int = 1000
    initial_vertices: int = 60
    initial_edges: int = 120
    update_share: float = 0.8
    create_share: float = 0.1
    seed: int = 0
    queries_per_template: int = 100
    slice_length: int = 100
    clients: int = 1
    store_dir: str | None = None

    def anchor_policy(self) -> AnchorPolicy:
        return AnchorPolicy.parse(self.anchor, tau1=self.tau1, tau2=self.tau2, c=self.c)

    def workload(self) -> WorkloadConfig:
        return WorkloadConfig(ops=self.ops, initial_vertices=self.initial_vertices,
                              initial_edges=self.initial_edges, update_share=self.update_share,
                              create_share=self.create_share, zipf=self.zipf, seed=self.seed)


@dataclass
class PhaseRow:
    phase: str
    query_id: str
    latencies_us: list
    hist: dict
    counters: Counter = field(default_factory=Counter)
    runs: int = 0

    @property
    def mean_chain_steps(self) -> float:
        return self.counters["chain_steps"] / self.runs if self.runs else 0.0

    @property
    def deltas_per_reconstruction(self) -> float:
        rebuilt = self.counters["reconstructions"]
        return self.counters["deltas_applied"] / rebuilt if rebuilt else 0.0

    def as_csv(self) -> dict:
        lat = sorted(self.latencies_us)
        return {
            "phase": self.phase,
            "query_id": self.query_id,
            "p50_us": _fmt(_percentile(lat, 50)),
            "p95_us": _fmt(_percentile(lat, 95)),
            "mean_us": _fmt(statistics.fmean(lat) if lat else 0.0),
            "hist_bytes": self.hist["bytes_total"],
            "anchors": self.hist["anchor_count"],
            "deltas": self.hist["delta_count"],
            "chain_steps": _fmt(self.mean_chain_steps),
            "deltas_applied": _fmt(self.deltas_per_reconstruction),
        }


@dataclass
class BenchReport:
    config: BenchConfig
    rows: list
    stats: dict

    def row(self, query_id):
        return next(r for r in self.rows if r.query_id == query_id)

    def query_rows(self):
        return [r for r in self.rows if r.phase == "query"]

    @property
    def hist_bytes(self) -> int:
        return self.stats["bytes_total"]

    def deltas_per_reconstruction(self) -> float:
        """Mean forward deltas applied per historical reconstruction over all queries."""
        total = Counter()
        for r in self.query_rows():
            total.update(r.counters)
        return total["deltas_applied"] / total["reconstructions"] if total["reconstructions"] else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow(r.as_csv())
        return buf.getvalue()


def _percentile(sorted_values, q):
    if not sorted_values:
        return 0.0
    k = max(0, min(len(sorted_values) - 1, round(q / 100 * len(sorted_values) + 0.5) - 1))
    return sorted_values[k]


def _fmt(x) -> str:
    return f"{x:.1f}"


def read_query_file(path) -> dict:
    """Statements one per line; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if text and not text.startswith("#"):
                out[f"F{len(out) + 1}"] = text
    return out


def query_params(rng: random.Random, ids, first_ts, last_ts, slice_length, skew):
    """One parameter set covering every template: ``$id``, ``$t``, ``$t1``, ``$t2``."""
    weights = [1.0 / (k + 1) ** skew for k in range(len(ids))]
    while True:
        t = rng.randint(first_ts, last_ts)
        t1 = rng.randint(first_ts, max(first_ts, last_ts - slice_length))
        yield {"id": rng.choices(ids, weights)[0] if ids else 0, "t": t,
               "t1": t1, "t2": t1 + slice_length}


def run_workload(db: Database, cfg: BenchConfig, ops=None):
    """Apply the workload and return per-transaction latencies and commit timestamps."""
    ops = generate_ops(cfg.workload()) if ops is None else ops
    latencies = []
    commits = []
    gc_after = set()
    if cfg.gc_every:
        groups = sum(1 for _ in group_ops(ops))
        gc_after = set(range(cfg.gc_every - 1, groups, cfg.gc_every))
    loader = Loader(db, gc_after=gc_after)
    for group in group_ops(ops):
        started = time.perf_counter()
        commits.append(loader.apply_group(group))
        latencies.append((time.perf_counter() - started) * 1e6)
    db.collect_garbage()
    return latencies, commits, loader


def run_queries(db: Database, statements: dict, params: list, clients: int = 1):
    """Execute every statement once per parameter set; returns ``{qid: (latencies, counters)}``."""
    parsed = {qid: parse(text) for qid, text in statements.items()}
    jobs = [(qid, p) for qid in parsed for p in params]
    results = {qid: ([], Counter()) for qid in parsed}
    lock = threading.Lock()

    def worker(chunk):
        for qid, p in chunk:
            started = time.perf_counter()
            result = db.execute(parsed[qid], p)
            elapsed = (time.perf_counter() - started) * 1e6
            with lock:
                results[qid][0].append(elapsed)
                results[qid][1].update(result.counters)

    if clients <= 1:
        worker(jobs)
    else:
        threads = [threading.Thread(target=worker, args=(jobs[i::clients],)) for i in range(clients)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    return results


def bench(cfg: BenchConfig, statements: dict | None = None) -> BenchReport:
    """Run the workload then the query mix; ``statements={}`` skips the query phase."""
    statements = QUERY_TEMPLATES if statements is None else statements
    config = Config(store_dir=cfg.store_dir, anchor=cfg.anchor_policy(),
                    gc_interval_ms=cfg.gc_interval_ms, retention_ms=cfg.retention_ms)
    ops = generate_ops(cfg.workload())
    with Database(config) as db:
        latencies, commits, _ = run_workload(db, cfg, ops)
        hist = db.history.stats()
        rows = [PhaseRow("workload", "txn", latencies, hist, runs=len(latencies))]
        if statements and commits:
            gen = query_params(random.Random(cfg.seed), hot_ids(ops), commits[0], commits[-1],
                               cfg.slice_length, cfg.zipf)
            params = [next(gen) for _ in range(cfg.queries_per_template)]
            results = run_queries(db, statements, params, cfg.clients)
            for qid in statements:
                lat, counters = results[qid]
                rows.append(PhaseRow("query", qid, lat, hist, counters, len(lat)))
        stats = db.stats()
    return BenchReport(cfg, rows, stats)


def hot_ids(ops):
    """Vertex ``id`` values ordered by how often the workload updates them."""
    ids = {}
    updates = Counter()
    for op in ops:
        if op["op"] == "create_vertex" and "id" in op.get("props", {}):
            ids[op["ref"]] = op["props"]["id"]
        elif op["op"] == "update" and op.get("kind", "vertex") == "vertex":
            updates[op["target"]] += 1
    return [ids[ref] for ref in sorted(ids, key=lambda r: (-updates[r], ids[r]))]
