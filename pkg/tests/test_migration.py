import random
import threading

import pytest

from tempograph import migration
from tempograph.checks import replay
from tempograph.cypher import parse
from tempograph.errors import CorruptChain
from tempograph.history import Segment
from tempograph.oracle import NaiveOracle
from tempograph.results import canonical_rows
from tempograph.workload import Loader, WorkloadConfig, generate_ops

from conftest import make_db

POINT = parse("MATCH (a)-[e]->(b) FOR TT AS OF $t RETURN a, e, b")
NODES = parse("MATCH (n) FOR TT AS OF $t RETURN n")


def snapshot_rows(db, commits):
    return [sorted(canonical_rows(db.query(stmt, {"t": t}))) for t in commits for stmt in (POINT, NODES)]


def test_single_update_migrates_one_version(db):
    db.execute("CREATE (n:User {id: 1})")
    assert db.collect_garbage().versions_migrated == 0  # a creation has no earlier version
    db.execute("MATCH (n:User) SET n.id = 2")
    result = db.collect_garbage()
    assert (result.versions_migrated, result.objects_touched) == (1, 1)
    obj = db.store.vertex(1)
    assert obj.head is None
    assert [s["props"] for _, s in db.history.all_versions(Segment.V, 1)] == [{"id": 1}]


def test_old_reader_blocks_migration(db):
    db.execute("CREATE (n:User {id: 1})")
    db.collect_garbage()
    reader = db.begin()
    db.execute("MATCH (n:User) SET n.id = 2")
    assert db.collect_garbage().versions_migrated == 0
    assert db.store.vertex(1).chain_length() == 1
    db.commit(reader)
    assert db.collect_garbage().versions_migrated == 1


def test_migration_is_transparent_on_grid():
    ops = generate_ops(WorkloadConfig(ops=400, initial_vertices=30, initial_edges=60, seed=5))
    oracle = NaiveOracle()
    db = replay(ops, "none", oracle)
    before = snapshot_rows(db, oracle.commits)
    assert db.collect_garbage().versions_migrated > 0
    assert snapshot_rows(db, oracle.commits) == before
    db.close()


def test_no_version_loss_after_quiescent_migration():
    ops = generate_ops(WorkloadConfig(ops=300, initial_vertices=30, initial_edges=60, seed=2))
    oracle = NaiveOracle()
    db = replay(ops, "none", oracle)
    db.collect_garbage()
    assert db.stats()["undo_versions"] == 0
    superseded = sum(1 for table in (oracle.vertices, oracle.edges) for o in table.values()
                     for _, ed, _ in o.versions if ed != 2**64 - 1)
    s = db.history.stats()["per_segment"]
    assert s["V"]["anchors"] + s["V"]["deltas"] + s["E"]["anchors"] + s["E"]["deltas"] == superseded
    db.close()


def test_disabled_interval_keeps_history_in_chains():
    ops = generate_ops(WorkloadConfig(ops=200, initial_vertices=20, initial_edges=40, seed=1))
    oracle = NaiveOracle()
    db = replay(ops, "none", oracle)
    assert db.history.stats()["bytes_total"] == 0
    want = [sorted(canonical_rows(oracle.evaluate(NODES, {"t": t}))) for t in oracle.commits]
    assert [sorted(canonical_rows(db.query(NODES, {"t": t}))) for t in oracle.commits] == want
    db.close()


def test_every_commit_keeps_chains_short():
    ops = generate_ops(WorkloadConfig(ops=300, initial_vertices=20, initial_edges=40, seed=4))
    db = replay(ops, "every")
    assert db.stats()["undo_versions"] == 0
    db.close()


def test_background_worker_stop_keeps_invariants():
    ops = generate_ops(WorkloadConfig(ops=400, initial_vertices=30, initial_edges=60, seed=8))
    oracle = NaiveOracle()
    db = make_db(gc_interval_ms=1)
    Loader(db, on_commit=oracle.apply).apply(ops)
    db.stop_background()
    for t in oracle.commits[::5]:
        for stmt in (NODES, POINT):
            assert sorted(canonical_rows(db.query(stmt, {"t": t}))) == \
                sorted(canonical_rows(oracle.evaluate(stmt, {"t": t})))
    db.close()


def test_failed_batch_leaves_store_untouched(db, monkeypatch):
    db.execute("CREATE (n:User {id: 1})")
    db.execute("MATCH (n:User) SET n.id = 2")
    before = db.state_hash()

    def broken(obj, part, targets):
        raise CorruptChain("injected")

    monkeypatch.setattr(migration, "_materialize", broken)
    result = db.collect_garbage()
    assert result.error and result.versions_migrated == 0
    assert db.state_hash() == before
    monkeypatch.undo()
    assert db.collect_garbage().versions_migrated == 1


def test_readers_racing_migration_see_consistent_results():
    ops = generate_ops(WorkloadConfig(ops=300, initial_vertices=20, initial_edges=40, seed=6))
    oracle = NaiveOracle()
    db = replay(ops, "none", oracle)
    want = {t: sorted(canonical_rows(oracle.evaluate(POINT, {"t": t}))) for t in oracle.commits}
    errors = []
    rng = random.Random(0)
    picks = [rng.choice(oracle.commits) for _ in range(150)]

    def reader():
        for t in picks:
            if sorted(canonical_rows(db.query(POINT, {"t": t}))) != want[t]:
                errors.append(t)

    th = threading.Thread(target=reader)
    th.start()
    db.collect_garbage()
    th.join()
    assert errors == []
    db.close()
