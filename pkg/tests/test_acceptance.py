"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are written
past pytest's output capture so they show up in the normal report.
"""

import random
import time
from collections import Counter

import pytest

from tempograph import Config, Database
from tempograph.bench import BenchConfig, bench
from tempograph.checks import CURRENT_QUERIES, GC_MODES, oracle_check, replay, slice_windows
from tempograph.cypher import parse, render
from tempograph.errors import EndpointMissing, ObjectMissing, ParseError, TempographError
from tempograph.history import AnchorPolicy, HistKey, Kind, Segment, decode_key, encode_key
from tempograph.oracle import NaiveOracle
from tempograph.results import canonical_rows
from tempograph.timemodel import INF
from tempograph.workload import WorkloadConfig, generate_ops

from querygen import EXAMPLE3, TEMPLATES, WORKLOAD, fuzz_inputs, generated_corpus, match_query

pytestmark = pytest.mark.slow

SEEDS = range(20)
OPS = 1000
GRAPH = {"initial_vertices": 40, "initial_edges": 80}
# hist_entries_touched of non-temporal queries, gathered by every criterion that runs any
NON_TEMPORAL_TOUCHES = Counter()


@pytest.fixture
def announce(capsys):
    def say(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    return say


def _workload(seed):
    return generate_ops(WorkloadConfig(ops=OPS, seed=seed, **GRAPH))


def _multiset(rows):
    return Counter(canonical_rows(rows))


def _fingerprint(rows):
    """Byte form of a result multiset, independent of row order."""
    return repr(sorted(repr(r) for r in canonical_rows(rows))).encode()


def _note_non_temporal(db, stmt, params=None):
    try:
        result = db.execute(stmt, params or {})
    except TempographError:  # a type error in WHERE carries no counters
        return None
    NON_TEMPORAL_TOUCHES["queries"] += 1
    NON_TEMPORAL_TOUCHES["touched"] += result.counters["hist_entries_touched"]
    return result


# -- 1 ------------------------------------------------------------------------

def test_criterion_1_oracle_equivalence(announce):
    started = time.perf_counter()
    failures = []
    queries = 0
    for seed in SEEDS:
        report = oracle_check(seed, OPS, query_count=100, gc_modes=GC_MODES, workload=GRAPH)
        queries += report.queries
        NON_TEMPORAL_TOUCHES["queries"] += len(CURRENT_QUERIES) * len(GC_MODES)
        NON_TEMPORAL_TOUCHES["touched"] += report.current_hist_touched
        if not report.passed:
            failures.append(report.divergences[0].reproducer(seed, OPS))
    elapsed = time.perf_counter() - started
    ok = not failures
    announce(1, ok, f"{len(SEEDS)} workloads x {len(GC_MODES)} migration states, {queries} queries, "
                    f"{len(failures)} divergent workloads, runtime {elapsed:.0f}s "
                    f"({'within' if elapsed < 120 else 'over'} the 2 min estimate)")
    assert ok, failures[0] if failures else ""


# -- 2 ------------------------------------------------------------------------

def _random_queries(rng, commits, count):
    out = []
    while len(out) < count:
        text = match_query(rng, WORKLOAD)
        if "now()" in text:  # the clock moves between runs; compare fixed instants only
            continue
        t = rng.choice(commits)
        out.append((parse(text), {"p": rng.choice([1, 300, "user3"]), "t": t,
                                  "t1": rng.randint(t, commits[-1] + 1)}))
    return out


def _run(db, stmt, params):
    try:
        return _fingerprint(db.query(stmt, params))
    except TempographError as exc:
        return type(exc).__name__.encode()


def test_criterion_2_migration_transparency(announce):
    differing = []
    total = 0
    for seed in SEEDS:
        oracle = NaiveOracle()
        db = replay(_workload(seed), "none", oracle)
        queries = _random_queries(random.Random(seed), oracle.commits, 50)
        before = [_run(db, stmt, p) for stmt, p in queries]
        migrated = db.collect_garbage().versions_migrated
        after = [_run(db, stmt, p) for stmt, p in queries]
        total += len(queries)
        differing += [(seed, render(q[0])) for q, a, b in zip(queries, before, after) if a != b]
        assert migrated > 0
        for stmt, _ in queries:
            if stmt.temporal is None:
                _note_non_temporal(db, stmt, {"p": 1})
        db.close()
    ok = not differing
    announce(2, ok, f"{total} queries over {len(SEEDS)} workloads, {len(differing)} differ after :gc")
    assert ok, differing[:3]


# -- 3 ------------------------------------------------------------------------

def test_criterion_3_anchor_tradeoff(announce):
    base = dict(ops=10_000, update_share=0.9, create_share=0.05, initial_vertices=200, initial_edges=400, seed=1)
    runs = {}
    for anchor in ("fixed:1", "fixed:10", "fixed:100", "fixed:1000", "adaptive"):
        report = bench(BenchConfig(anchor=anchor, **base))
        runs[anchor] = (report.hist_bytes, report.deltas_per_reconstruction())
    fixed = [runs[f"fixed:{u}"] for u in (1, 10, 100, 1000)]
    sizes = [b for b, _ in fixed]
    deltas = [d for _, d in fixed]
    size_ok = all(a > b for a, b in zip(sizes, sizes[1:]))
    delta_ok = all(a <= b for a, b in zip(deltas, deltas[1:]))
    ratio_ok = deltas[3] >= 10 * deltas[0]
    ad_bytes, ad_deltas = runs["adaptive"]
    envelope_ok = sizes[3] <= ad_bytes <= sizes[0] and deltas[0] <= ad_deltas <= deltas[3]
    ok = size_ok and delta_ok and ratio_ok and envelope_ok
    table = ", ".join(f"{k}: {b} B / {d:.2f} deltas" for k, (b, d) in runs.items())
    announce(3, ok, f"{table}; bytes decreasing={size_ok}, deltas non-decreasing={delta_ok}, "
                    f"u1000>=10*u1={ratio_ok}, adaptive in envelope={envelope_ok}")
    assert ok


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_bounded_reconstruction(announce):
    db = Database(Config(anchor=AnchorPolicy.parse("fixed:10"), gc_interval_ms=None))
    stamps = [db.execute("CREATE (n:User {id: 1, score: 0})").summary["commit_ts"]]
    for i in range(1, 1001):
        stamps.append(db.execute("MATCH (n:User {id: 1}) SET n.score = $s", {"s": i}).summary["commit_ts"])
        if i % 100 == 0:
            db.collect_garbage()
    db.collect_garbage()
    assert db.history.stats()["anchor_count"] + db.history.stats()["delta_count"] == 1000
    worst_anchors = worst_deltas = 0
    bad = []
    # every historical version, probed at its first and last instant
    probes = [(i, t) for i, t in enumerate(stamps[:-1])] + [(i, stamps[i + 1] - 1) for i in range(1000)]
    for expected, t in probes:
        result = db.execute("MATCH (n:User {id: 1}) FOR TT AS OF $t RETURN n.score", {"t": t})
        c = result.counters
        worst_anchors = max(worst_anchors, c["anchors_seeked"])
        worst_deltas = max(worst_deltas, c["deltas_applied"])
        if result.rows != [(expected,)] or c["anchors_seeked"] != 1 or c["deltas_applied"] > 10:
            bad.append((t, result.rows, dict(c)))
    db.close()
    ok = not bad
    announce(4, ok, f"{len(probes)} point queries over 1000 historical versions, max anchors_seeked "
                    f"{worst_anchors}, max deltas_applied {worst_deltas}")
    assert ok, bad[:3]


# -- 5 ------------------------------------------------------------------------

def test_criterion_5_non_temporal_isolation(announce):
    rng = random.Random(5)
    for seed in range(5):
        ops = _workload(100 + seed)
        for mode in GC_MODES:
            db = replay(ops, mode)
            for text in CURRENT_QUERIES + tuple(TEMPLATES.values()):
                stmt = parse(text)
                if stmt.temporal is None:
                    _note_non_temporal(db, stmt)
                else:
                    _note_non_temporal(db, parse(text.split(" FOR TT")[0] + " RETURN n"), {"id": 3})
            generated = 0
            while generated < 40:
                stmt = parse(match_query(rng, WORKLOAD))
                if stmt.temporal is None:
                    _note_non_temporal(db, stmt, {"p": 3})
                    generated += 1
            db.close()
    ok = NON_TEMPORAL_TOUCHES["touched"] == 0
    announce(5, ok, f"{NON_TEMPORAL_TOUCHES['queries']} non-temporal queries across the suite touched "
                    f"{NON_TEMPORAL_TOUCHES['touched']} history entries")
    assert ok


# -- 6 ------------------------------------------------------------------------

def _attempt(db, action):
    """Run ``action(txn)`` expecting a rejection; returns the error type or None."""
    txn = db.begin()
    try:
        action(txn)
    except TempographError as exc:
        db.abort(txn)
        return type(exc)
    db.abort(txn)
    return None


def test_criterion_6_constraint_enforcement(announce):
    attempts = rejected = 0
    problems = []
    for seed in range(5):
        oracle = NaiveOracle()
        db = replay(_workload(seed), "mid", oracle)
        store = db.store
        dead_v = sorted(g for g, v in oracle.vertices.items() if v.state is None)
        live_v = sorted(g for g, v in oracle.vertices.items() if v.state is not None)
        dead_e = sorted(g for g, e in oracle.edges.items() if e.state is None)
        live_e = sorted(g for g, e in oracle.edges.items() if e.state is not None)
        assert dead_v and dead_e and live_v
        rng = random.Random(seed)
        cases = []
        for gid in dead_v:
            peer = rng.choice(live_v)
            cases.append((EndpointMissing, lambda t, a=peer, b=gid: store.create_edge(t, a, b, "Follows", {})))
            cases.append((EndpointMissing, lambda t, a=gid, b=peer: store.create_edge(t, a, b, "Likes", {})))
            cases.append((ObjectMissing, lambda t, g=gid: store.update_properties(t, g, {"score": 1})))
        for gid in dead_e:
            cases.append((ObjectMissing, lambda t, g=gid: store.update_properties(t, g, {"w": 1}, "edge")))
        # a violation after valid writes in the same transaction must undo those too
        for gid in dead_v[:10]:
            live = rng.choice(live_v)
            edge = rng.choice(live_e)

            def mixed(t, g=gid, v=live, e=edge):
                store.update_properties(t, v, {"score": -1})
                store.update_properties(t, e, {"w": -1}, "edge")
                store.create_vertex(t, ("User",), {"id": -1})
                store.create_edge(t, v, g, "Follows", {})
            cases.append((EndpointMissing, mixed))
        for expected, action in cases:
            before = db.state_hash()
            got = _attempt(db, action)
            attempts += 1
            if got is expected and db.state_hash() == before:
                rejected += 1
            else:
                problems.append((seed, expected.__name__, got and got.__name__))
        db.close()
    ok = rejected == attempts
    announce(6, ok, f"{rejected}/{attempts} violation attempts rejected with the designated error "
                    f"and an unchanged state hash")
    assert ok, problems[:5]


# -- 7 ------------------------------------------------------------------------

def _random_key(rng):
    def u64():
        return rng.choice([0, 1, 2**63, INF - 1, INF, rng.randrange(2**64), rng.randrange(1000)])
    gid = rng.choice([0, 1, 255, 256, 2**32, 2**64 - 1, rng.randrange(2**64), rng.randrange(100)])
    a, b = u64(), u64()
    if a == b:
        b = a + 1 if a < INF else a - 1
    st, ed = min(a, b), max(a, b)
    return HistKey(rng.choice(list(Segment)), rng.choice(list(Kind)), gid, st, ed)


def test_criterion_7_key_encoding(announce):
    rng = random.Random(7)
    keys = [_random_key(rng) for _ in range(100_000)]
    encoded = [encode_key(k) for k in keys]
    round_trip = sum(decode_key(raw) == key for raw, key in zip(encoded, keys))
    by_bytes = [decode_key(raw) for raw in sorted(encoded)]
    by_value = sorted(keys, key=lambda k: (int(k.segment), int(k.kind), k.gid, k.st, k.ed))
    order_ok = by_bytes == by_value
    ok = round_trip == len(keys) and order_ok and all(len(raw) == 26 for raw in encoded)
    announce(7, ok, f"{round_trip}/{len(keys)} keys round-trip, byte order equals semantic order: {order_ok}")
    assert ok


# -- 8 ------------------------------------------------------------------------

def test_criterion_8_parser_corpus(announce):
    generated = generated_corpus(60, seed=8)
    corpus = list(TEMPLATES.values()) + [EXAMPLE3] + generated
    failed = []
    for text in corpus:
        stmt = parse(text)
        again = parse(render(stmt))
        if again != stmt or render(again) != render(stmt):
            failed.append(text)
    crashes = []
    for text in fuzz_inputs(100_000, seed=8, corpus=corpus):
        try:
            parse(text)
        except ParseError:
            pass
        except Exception as exc:  # anything else is a crash
            crashes.append((text, repr(exc)))
    ok = not failed and not crashes and len(generated) >= 40
    announce(8, ok, f"{len(corpus) - len(failed)}/{len(corpus)} statements round-trip "
                    f"({len(generated)} generated), 100000 fuzz inputs, {len(crashes)} crashes")
    assert ok, (failed[:3], crashes[:3])


# -- 9 ------------------------------------------------------------------------

POINT = "MATCH (n) FOR TT AS OF $t RETURN n"
EDGES = "MATCH (a)-[e]->(b) FOR TT AS OF $t RETURN a, e, b"
SLICES = ("MATCH (n) FOR TT FROM $t1 TO $t2 RETURN n",
          "MATCH (a)-[e]->(b) FOR TT FROM $t1 TO $t2 RETURN a, e, b")


def test_criterion_9_retention_purge(announce):
    mismatches = []
    inside = outside = removed = 0
    for seed in range(4):
        for mode in ("every", "mid"):
            oracle = NaiveOracle()
            db = replay(_workload(seed), mode, oracle)
            commits = oracle.commits
            cutoff = commits[len(commits) // 2]  # a known version boundary
            now = commits[-1] + 1
            removed += db.purge(retention_ms=now - cutoff, now=now)
            assert db.history.retention_cutoff == cutoff
            plan = [(POINT, {"t": t}) for t in commits] + [(EDGES, {"t": t}) for t in commits[::5]]
            plan += [(SLICES[i % 2], {"t1": a, "t2": b})
                     for i, (a, b) in enumerate(slice_windows(random.Random(seed), now, 100))]
            for text, params in plan:
                stmt = parse(text)
                got = db.query(stmt, params)
                t2 = params.get("t2", params.get("t"))
                if t2 < cutoff:
                    outside += 1
                    if got:
                        mismatches.append((seed, mode, text, params, "not empty"))
                    continue
                inside += 1
                if _multiset(got) != _multiset(oracle.evaluate(stmt, params, cutoff=cutoff)):
                    mismatches.append((seed, mode, text, params))
            db.close()
    ok = not mismatches and removed > 0 and inside > 0 and outside > 0
    announce(9, ok, f"{removed} history entries purged; {inside} queries inside the retained window match "
                    f"the restricted oracle, {outside} wholly outside return empty; {len(mismatches)} mismatches")
    assert ok, mismatches[:3]
