"""Batch fetching, execution records, merge-scan semantics, and the
engine-level equivalence and progress properties."""

import pytest

from blockexec.accounts import AccountState, encode_account
from blockexec.executor import (
    Block,
    ParallelEngine,
    SerialEngine,
    Transaction,
    batch_fetch,
    execute_tx,
    explicit_conflict,
)
from blockexec.kvstore import MemoryStore
from blockexec.statedb import CommitConfig, StateDB
from blockexec.vm import MiniProgram
from blockexec.workload import WorkloadSpec, account_address, gen_block, genesis


def _addr(name: str) -> bytes:
    return name.encode().ljust(20, b"\x00")


def _tx(i, s, r, value=1):
    return Transaction(index=i, sender=_addr(s), receiver=_addr(r), value=value)


# -- explicit conflicts and batch fetching --------------------------------

def test_explicit_conflict_cases():
    assert not explicit_conflict(_tx(0, "a", "b"), _tx(1, "c", "d"))
    assert explicit_conflict(_tx(0, "a", "b"), _tx(1, "b", "c"))
    assert explicit_conflict(_tx(0, "a", "b"), _tx(1, "a", "b"))


def test_batch_fetch_skips_conflicts():
    remaining = [_tx(0, "a", "b"), _tx(1, "b", "c"), _tx(2, "d", "e")]
    batch = batch_fetch(remaining, 2)
    assert [t.index for t in batch] == [0, 2]
    assert [t.index for t in remaining] == [1]


def test_batch_fetch_forced_fill():
    remaining = [_tx(0, "a", "b"), _tx(1, "a", "c"), _tx(2, "a", "d")]
    batch = batch_fetch(remaining, 2)
    assert [t.index for t in batch] == [0, 1]  # filled despite conflict
    assert [t.index for t in remaining] == [2]


def test_batch_fetch_takes_all_when_small():
    remaining = [_tx(0, "a", "b"), _tx(1, "c", "d")]
    batch = batch_fetch(remaining, 8)
    assert [t.index for t in batch] == [0, 1]
    assert remaining == []


def test_batch_fetch_deterministic_size():
    txs = [_tx(i, f"s{i}", f"r{i}") for i in range(10)]
    remaining = list(txs)
    batch = batch_fetch(remaining, 4)
    assert len(batch) == 4
    assert len(remaining) == 6


# -- transaction execution ------------------------------------------------

def _funded_db(balances):
    db = StateDB(MemoryStore())
    for name, bal in balances.items():
        db.state_set(_addr(name), None,
                     encode_account(AccountState(balance=bal), with_storage_root=False))
    return db


def test_execute_transfer():
    db = _funded_db({"a": 10})
    rec = execute_tx(_tx(0, "a", "b", value=5), db.light_copy())
    assert not rec.failed
    writes = {k: v for k, v in rec.write_set.items()}
    view = db.light_copy()
    view.writes = writes
    assert view.get_account(_addr("a")).balance == 5
    assert view.get_account(_addr("a")).nonce == 1
    assert view.get_account(_addr("b")).balance == 5
    assert {_addr("a"), _addr("b")} <= rec.read_set


def test_insufficient_balance_is_committed_nonce_bump():
    db = _funded_db({"a": 3})
    rec = execute_tx(_tx(0, "a", "b", value=5), db.light_copy())
    assert rec.failed
    assert set(rec.write_set) == {_addr("a")}
    view = db.light_copy()
    view.writes = dict(rec.write_set)
    assert view.get_account(_addr("a")).balance == 3  # no debit
    assert view.get_account(_addr("a")).nonce == 1


def test_bad_nonce_fails_deterministically():
    db = _funded_db({"a": 10})
    tx = Transaction(index=0, sender=_addr("a"), receiver=_addr("b"),
                     value=1, nonce=7)
    rec = execute_tx(tx, db.light_copy())
    assert rec.failed


def test_program_write_lands_in_write_set():
    db = _funded_db({"a": 10, "c": 0})
    prog = MiniProgram((("store", ("const", 1), ("const", 42)),))
    tx = Transaction(index=0, sender=_addr("a"), receiver=_addr("c"),
                     value=1, program=prog)
    rec = execute_tx(tx, db.light_copy())
    slot = (1).to_bytes(32, "big")
    assert rec.write_set[_addr("c") + slot] == (42).to_bytes(32, "big")


# -- engine-level properties ----------------------------------------------

SPEC = WorkloadSpec(num_accounts=120, num_contracts=6, block_size=80,
                    contract_ratio=0.25)
CFG = CommitConfig(block_size=80, workers=4)


def _engines():
    db_s = StateDB(MemoryStore(), CFG)
    genesis(SPEC, db_s)
    db_p = StateDB(MemoryStore(), CFG)
    genesis(SPEC, db_p)
    return db_s, db_p


def test_parallel_equals_serial_roots():
    db_s, db_p = _engines()
    for height in range(1, 5):
        block = gen_block(SPEC, height)
        root_s, _ = SerialEngine(db_s).run_block(block)
        root_p, stats = ParallelEngine(db_p).run_block(block)
        assert root_s == root_p
        assert stats["committed"] == SPEC.block_size


def test_commit_order_is_block_order():
    _, db_p = _engines()
    _, stats = ParallelEngine(db_p).run_block(gen_block(SPEC, 1))
    assert stats["committed_order"] == list(range(SPEC.block_size))


def test_single_tx_block():
    db_s, db_p = _engines()
    tx = Transaction(index=0, sender=account_address(0),
                     receiver=account_address(1), value=5)
    block = Block(height=1, transactions=[tx])
    root_p, stats = ParallelEngine(db_p).run_block(block)
    root_s, _ = SerialEngine(db_s).run_block(block)
    assert root_p == root_s
    assert stats["batches"] == 1 and stats["committed"] == 1


def test_hot_account_progress_bound():
    hot = WorkloadSpec(num_accounts=120, block_size=60, hot_account=True)
    cfg = CommitConfig(block_size=60, workers=4)
    db_s = StateDB(MemoryStore(), cfg)
    genesis(hot, db_s)
    db_p = StateDB(MemoryStore(), cfg)
    genesis(hot, db_p)
    for height in range(1, 4):
        block = gen_block(hot, height)
        root_s, _ = SerialEngine(db_s).run_block(block)
        root_p, stats = ParallelEngine(db_p).run_block(block)
        assert root_p == root_s
        # every batch commits at least one tx, so batches <= block size
        assert stats["batches"] <= hot.block_size
        assert stats["committed_order"] == list(range(hot.block_size))


def test_implicit_conflict_aborts_and_converges():
    # same-contract read-modify-write from disjoint senders: invisible to
    # batch fetching, caught by the merge scan
    db = _funded_db({f"s{i}": 100 for i in range(4)})
    db.commit_block_sync(dict(db.state_cache), 0)
    contract = _addr("c")
    prog = MiniProgram((("load", ("const", 0)), ("add", ("const", 1)),
                        ("store", ("const", 0), ("acc",))))
    txs = [Transaction(index=i, sender=_addr(f"s{i}"), receiver=contract,
                       value=1, program=prog) for i in range(4)]
    cfg = CommitConfig(block_size=4, workers=4)
    dbp = StateDB(db.store, cfg)
    _, stats = ParallelEngine(dbp, jitter=0.002).run_block(Block(1, txs))
    slot = (0).to_bytes(32, "big")
    # all four increments must have landed exactly once each
    assert dbp.state_get(contract, slot) == (4).to_bytes(32, "big")


def test_skip_abort_check_corrupts_state():
    # negative control: disabling validation must diverge from serial
    hot = WorkloadSpec(num_accounts=50, block_size=40, hot_account=True)
    cfg = CommitConfig(block_size=40, workers=8)
    db_s = StateDB(MemoryStore(), cfg)
    genesis(hot, db_s)
    db_p = StateDB(MemoryStore(), cfg)
    genesis(hot, db_p)
    block = gen_block(hot, 1)
    root_s, _ = SerialEngine(db_s).run_block(block)
    root_p, _ = ParallelEngine(db_p, skip_abort_check=True).run_block(block)
    assert root_s != root_p
