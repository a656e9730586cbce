"""Batch-based optimistic parallel execution with in-order commit.

Batches avoid explicit sender/receiver conflicts up front; implicit
conflicts (shared contract storage) are caught after execution by
read/write-set validation, and offending transactions are re-executed in a
later batch.  Committed effects always equal serial block-order execution.
"""

from __future__ import annotations

import bisect
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .accounts import ADDRESS_LEN, decode_state_key
from .pipeline import CrashSimulated, Pipeline
from .statedb import QueueClosed, StateDB
from .vm import MiniProgram, run_program


@dataclass
class Transaction:
    index: int
    sender: bytes
    receiver: bytes
    value: int
    nonce: Optional[int] = None
    program: Optional[MiniProgram] = None


@dataclass
class Block:
    height: int
    transactions: list


@dataclass
class ExecutionRecord:
    tx_index: int
    read_set: set
    write_set: dict
    failed: bool = False
    snapshot_seq: int = 0


@dataclass
class BatchOutcome:
    committed: list
    aborted: list
    merged_writes: dict
    next_commit_index: int


def explicit_conflict(ti: Transaction, tj: Transaction) -> bool:
    """Sender/receiver overlap detectable before execution."""
    return ti.sender in (tj.sender, tj.receiver) or ti.receiver in (tj.sender, tj.receiver)


def batch_fetch(remaining: list, workers: int) -> list:
    """Greedy in-order selection avoiding explicit conflicts; short batches
    are forcibly filled with the smallest-index leftovers."""
    batch: list[Transaction] = []
    accounts: set[bytes] = set()
    chosen: set[int] = set()
    for _ in range(workers):
        nxt = None
        for tx in remaining:
            if tx.index in chosen:
                continue
            if tx.sender in accounts or tx.receiver in accounts:
                continue
            nxt = tx
            break
        if nxt is None:
            break
        batch.append(nxt)
        chosen.add(nxt.index)
        accounts.add(nxt.sender)
        accounts.add(nxt.receiver)
    if len(batch) < workers:
        for tx in remaining:
            if len(batch) >= workers:
                break
            if tx.index not in chosen:
                batch.append(tx)
                chosen.add(tx.index)
    remaining[:] = [tx for tx in remaining if tx.index not in chosen]
    batch.sort(key=lambda tx: tx.index)
    return batch


def execute_tx(tx: Transaction, view) -> ExecutionRecord:
    """Run transfer semantics plus the optional contract program on a
    private view; view mutations never escape."""
    sender = view.get_account(tx.sender)
    bad_nonce = tx.nonce is not None and tx.nonce != sender.nonce
    if bad_nonce or sender.balance < tx.value:
        # failed-but-committed: the nonce charge is the only state change
        sender.nonce += 1
        view.set_account(tx.sender, sender)
        return ExecutionRecord(tx.index, view.reads, view.writes, failed=True)
    sender.balance -= tx.value
    sender.nonce += 1
    view.set_account(tx.sender, sender)
    receiver = view.get_account(tx.receiver)
    receiver.balance += tx.value
    view.set_account(tx.receiver, receiver)
    if tx.program is not None:
        run_program(tx.program, view, tx.receiver)
    return ExecutionRecord(tx.index, view.reads, view.writes)


class SerialEngine:
    """Serial block-order execution through the synchronous three-phase
    state-database workflow; the oracle for all equivalence checks."""

    def __init__(self, db: StateDB):
        self.db = db

    def run_block(self, block: Block):
        writes: dict[bytes, bytes] = {}
        for tx in block.transactions:
            view = self.db.light_copy()
            record = execute_tx(tx, view)
            for key, value in record.write_set.items():
                address, slot = decode_state_key(key)
                self.db.state_set(address, slot, value)
                writes[key] = value
        root = self.db.commit_block_sync(writes, block.height)
        stats = {"batches": len(block.transactions), "aborted": 0,
                 "committed": len(block.transactions)}
        return root, stats


class ParallelEngine:
    """Coordinator for batch fetching, parallel execution on light copies,
    merge-scan commit, and the asynchronous storage pipeline."""

    def __init__(self, db: StateDB, jitter: float = 0.0,
                 skip_abort_check: bool = False):
        self.db = db
        self.jitter = jitter
        self.skip_abort_check = skip_abort_check

    def run_block(self, block: Block, crash_hook=None):
        db = self.db
        cfg = db.cfg
        pipeline = Pipeline(db, block.height, crash_hook=crash_hook)
        pipeline.start()
        pool = ThreadPoolExecutor(max_workers=cfg.workers)
        try:
            return self._run(block, pipeline, pool)
        except QueueClosed:
            if pipeline.crashed:
                raise CrashSimulated()
            raise
        finally:
            pool.shutdown(wait=False)
            pipeline.close()

    def _run(self, block: Block, pipeline: Pipeline, pool):
        db = self.db
        remaining = sorted(block.transactions, key=lambda tx: tx.index)
        pending: dict[int, ExecutionRecord] = {}
        tx_by_index = {tx.index: tx for tx in block.transactions}
        i_next = 0
        commit_seq = 0
        committed_at: dict[bytes, int] = {}
        committed_order: list[int] = []
        acct_pending: dict[bytes, dict] = {}  # address -> slot updates (may be empty)
        merged_writes: dict[bytes, bytes] = {}
        batches = 0
        aborted_events = 0

        while remaining or pending:
            batch = batch_fetch(remaining, db.cfg.workers)
            batches += 1
            snapshot_seq = commit_seq
            records = list(pool.map(self._exec_one, batch))
            for rec in records:
                rec.snapshot_seq = snapshot_seq
                pending[rec.tx_index] = rec

            # merge scan: ascending index order over every executed,
            # uncommitted record
            i_next_before = i_next
            lower_writes: set[bytes] = set()
            for idx in sorted(pending):
                rec = pending[idx]
                conflict = False
                if not self.skip_abort_check:
                    if rec.read_set & lower_writes:
                        conflict = True
                    else:
                        for key in rec.read_set:
                            if committed_at.get(key, -1) > rec.snapshot_seq:
                                conflict = True
                                break
                if conflict:
                    del pending[idx]
                    bisect.insort(remaining, tx_by_index[idx], key=lambda t: t.index)
                    aborted_events += 1
                elif idx == i_next:
                    commit_seq += 1
                    for key, value in rec.write_set.items():
                        address, slot = decode_state_key(key)
                        db.state_set(address, slot, value)
                        committed_at[key] = commit_seq
                        merged_writes[key] = value
                        if slot is None:
                            acct_pending.setdefault(address, {})
                        else:
                            acct_pending.setdefault(address, {})[slot] = value
                    committed_order.append(idx)
                    del pending[idx]
                    i_next += 1
                else:
                    lower_writes |= rec.write_set.keys()
            assert i_next > i_next_before, "merge scan must commit at least one transaction"

            # flush storage/account updates for accounts no remaining
            # transaction explicitly touches
            uncommitted = list(remaining) + [tx_by_index[i] for i in pending]
            explicit = set()
            for tx in uncommitted:
                explicit.add(tx.sender)
                explicit.add(tx.receiver)
            for address in [a for a in acct_pending if a not in explicit]:
                pipeline.flush_account(address, acct_pending.pop(address))
            pipeline.async_commit_account(len(uncommitted), explicit)

        for address in list(acct_pending):
            pipeline.flush_account(address, acct_pending.pop(address))
        root = pipeline.finalize()
        stats = {
            "batches": batches,
            "aborted": aborted_events,
            "committed": len(committed_order),
            "committed_order": committed_order,
            "merged_writes": merged_writes,
            "early_hash_total": db.account_trie.early_hash_total,
            "early_rehash_total": db.account_trie.early_rehash_total,
        }
        assert committed_order == sorted(committed_order)
        return root, stats

    def _exec_one(self, tx: Transaction) -> ExecutionRecord:
        if self.jitter:
            time.sleep(random.random() * self.jitter)
        return execute_tx(tx, self.db.light_copy())
