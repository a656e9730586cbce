"""Crash injection at the pipeline's cooperative halt points, plus the
height-filtered direct-record semantics of recovery."""

import struct

import pytest

from blockexec.cli import run_crash_trial
from blockexec.executor import ParallelEngine
from blockexec.kvstore import DIRECT_PREFIX, FileStore, MemoryStore
from blockexec.statedb import CommitConfig, CorruptMeta, StateDB
from blockexec.workload import WorkloadSpec, gen_block, genesis

SPEC = WorkloadSpec(num_accounts=150, num_contracts=8, block_size=60,
                    contract_ratio=0.2)
CFG = CommitConfig(block_size=60, workers=4)


@pytest.mark.parametrize("crash_point", ["mid-store", "mid-hash", "post-meta"])
@pytest.mark.parametrize("offset", [0, 2, 7])
def test_crash_and_replay_matches_reference(crash_point, offset):
    assert run_crash_trial(SPEC, CFG, crash_point, crash_height=2, offset=offset)


def test_recover_is_noop_after_clean_shutdown():
    db = StateDB(MemoryStore(), CFG)
    genesis(SPEC, db)
    root1, _ = ParallelEngine(db).run_block(gen_block(SPEC, 1))
    db.recover(1)
    assert db.account_trie.root_digest() == root1
    root2, _ = ParallelEngine(db).run_block(gen_block(SPEC, 2))
    # uninterrupted continuation from the same store agrees
    db_ref = StateDB(MemoryStore(), CFG)
    genesis(SPEC, db_ref)
    ParallelEngine(db_ref).run_block(gen_block(SPEC, 1))
    ref2, _ = ParallelEngine(db_ref).run_block(gen_block(SPEC, 2))
    assert root2 == ref2


def test_direct_records_above_replay_height_invisible():
    db = StateDB(MemoryStore(), CFG)
    genesis(SPEC, db)
    address = next(k for k in db.direct_index if len(k) == 20)
    committed = db.state_get(address)
    # simulate a partial next-block write surviving the crash
    db.store.put(DIRECT_PREFIX + address + struct.pack(">Q", 1), b"\x00" * 41)
    db.recover(0)
    assert db.state_get(address) == committed


def test_recover_missing_meta_raises():
    db = StateDB(MemoryStore(), CFG)
    genesis(SPEC, db)
    with pytest.raises(CorruptMeta):
        db.recover(5)


def test_recovery_over_file_store(tmp_path):
    path = str(tmp_path / "chain.log")
    store = FileStore(path)
    db = StateDB(store, CFG)
    genesis(SPEC, db)
    root1, _ = ParallelEngine(db).run_block(gen_block(SPEC, 1))
    store.close()
    # process restart: reopen the log, resume at the recorded height
    db2 = StateDB(FileStore(path), CFG)
    assert db2.height == 1
    assert db2.account_trie.root_digest() == root1
    root2, _ = ParallelEngine(db2).run_block(gen_block(SPEC, 2))
    db_ref = StateDB(MemoryStore(), CFG)
    genesis(SPEC, db_ref)
    ParallelEngine(db_ref).run_block(gen_block(SPEC, 1))
    ref2, _ = ParallelEngine(db_ref).run_block(gen_block(SPEC, 2))
    assert root2 == ref2
    db2.store.close()


def test_torn_meta_batch_discarded(tmp_path):
    # a crash mid-append of the final (meta) batch must roll the store back
    # to the previous block atomically
    path = str(tmp_path / "chain.log")
    store = FileStore(path)
    db = StateDB(store, CFG)
    genesis(SPEC, db)
    ParallelEngine(db).run_block(gen_block(SPEC, 1))
    store.close()
    with open(path, "r+b") as fh:
        fh.seek(0, 2)
        fh.truncate(fh.tell() - 2)  # tear the last record
    db2 = StateDB(FileStore(path), CFG)
    assert db2.height <= 1
    db2.store.close()
