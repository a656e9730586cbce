"""Asynchronous commit pipeline: background node retrieval, commit-point
scheduling, the hash/store worker pair for the account trie, and
per-account storage-trie commit workers.
"""

from __future__ import annotations

import math
import queue
import struct
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .accounts import decode_account, encode_account
from .kvstore import DIRECT_PREFIX, NODE_PREFIX
from .statedb import CommitConfig, QueueClosed, StateDB, _h8
from .trie import Branch, Extension, Leaf, TrieNode, serialize


class CrashSimulated(RuntimeError):
    """Raised by pipeline waits after a cooperative crash injection."""


def commit_point(level: int, cfg: CommitConfig) -> float:
    """Remaining-transaction threshold below which a node at the given trie
    level is unlikely to be modified again.

    Levels 0 and 1 commit only once nothing remains; levels >= 4 are cheap
    enough to hash speculatively at any time.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    if level <= 1:
        return 0.0
    if level >= 4:
        return float(cfg.block_size)
    return -(16 ** level) * math.log(cfg.alpha) / cfg.mu


@dataclass
class RetrievalTask:
    address: bytes
    slot: Optional[bytes]
    value: bytes


class Pipeline:
    """Per-block asynchronous workflow around one StateDB."""

    def __init__(self, db: StateDB, height: int, crash_hook=None):
        self.db = db
        self.cfg = db.cfg
        self.height = height
        self.crash_hook = crash_hook
        self.q_ret: queue.Queue = queue.Queue()
        self.q_hash: queue.Queue = queue.Queue()
        self.q_store: queue.Queue = queue.Queue()
        self.q_commit: queue.Queue = queue.Queue()
        self.closed = False
        self.crashed = False
        self.remaining = self.cfg.block_size
        self.retrieval_tasks_done = 0
        self._threads: list[threading.Thread] = []
        self._account_locks: dict[bytes, threading.Lock] = {}
        self._account_locks_guard = threading.Lock()

    # -- lifecycle -----------------------------------------------------

    def start(self) -> None:
        self.db.pipeline = self
        for i in range(self.cfg.retrieval_threads):
            self._spawn(self._retrieval_loop, f"retrieve-{i}")
        for i in range(self.cfg.commit_threads):
            self._spawn(self._storage_commit_loop, f"commit-{i}")
        self._spawn(self._hash_loop, "hash")
        self._spawn(self._store_loop, "store")

    def _spawn(self, target, name: str) -> None:
        t = threading.Thread(target=target, name=name, daemon=True)
        t.start()
        self._threads.append(t)

    def close(self) -> None:
        self.closed = True
        for _ in range(self.cfg.retrieval_threads):
            self.q_ret.put(None)
        for _ in range(self.cfg.commit_threads):
            self.q_commit.put(None)
        self.q_hash.put(None)
        self.q_store.put(None)
        for t in self._threads:
            t.join(timeout=10)
        if self.db.pipeline is self:
            self.db.pipeline = None

    def _crash(self, site: str) -> bool:
        if self.crash_hook is not None and self.crash_hook(site):
            self.crashed = True
            self.closed = True
            return True
        return False

    # -- retrieval workers ---------------------------------------------

    def push_retrieval(self, address: bytes, slot: Optional[bytes], value: bytes) -> None:
        if self.closed:
            raise QueueClosed("retrieval pipeline has shut down")
        self.q_ret.put(RetrievalTask(address, slot, value))

    def _retrieval_loop(self) -> None:
        db = self.db
        while True:
            task = self.q_ret.get()
            if task is None or self.crashed:
                self.q_ret.task_done()
                return
            try:
                db.account_trie.load_path(db.key_hash(task.address))
                if task.slot is not None:
                    trie = db.storage_trie(task.address)
                    trie.load_path(db.key_hash(task.slot))
                self.retrieval_tasks_done += 1
            except Exception:
                pass  # missing nodes surface again at commit time
            finally:
                self.q_ret.task_done()

    # -- asynchronous storage-trie commits -----------------------------

    def flush_account(self, address: bytes, slot_updates: dict[bytes, bytes]) -> None:
        if self.closed:
            raise QueueClosed("commit pipeline has shut down")
        self.q_commit.put((address, slot_updates))

    def _account_lock(self, address: bytes) -> threading.Lock:
        with self._account_locks_guard:
            lock = self._account_locks.get(address)
            if lock is None:
                lock = threading.Lock()
                self._account_locks[address] = lock
            return lock

    def _storage_commit_loop(self) -> None:
        db = self.db
        while True:
            item = self.q_commit.get()
            if item is None or self.crashed:
                self.q_commit.task_done()
                return
            address, slot_updates = item
            try:
                with self._account_lock(address):
                    if slot_updates:
                        trie = db.storage_trie(address)
                        for slot, value in sorted(slot_updates.items()):
                            trie.insert(db.key_hash(slot), value)
                        batch: list = []
                        storage_root = trie.root_digest(batch)
                        for slot, value in slot_updates.items():
                            batch.append((DIRECT_PREFIX + address + slot + _h8(self.height), value))
                        db.store.write_batch(batch)
                        db.counters.node_db_writes += len(batch) - len(slot_updates)
                        db.counters.direct_db_writes += len(slot_updates)
                        for slot, value in slot_updates.items():
                            db.direct_index[address + slot] = (self.height, value)
                    else:
                        storage_root = db.current_storage_root(address)
                    # read the logical account value at leaf-update time, so
                    # out-of-order flushes of disjoint slot deltas converge
                    state = decode_account(db.peek_state(address))
                    state.storage_root = storage_root
                    db.account_trie.insert(
                        db.key_hash(address),
                        encode_account(state, with_storage_root=True),
                        meta=(address, encode_account(state, with_storage_root=False)),
                    )
            finally:
                self.q_commit.task_done()

    # -- account-trie hash/store pipeline ------------------------------

    def async_commit_account(self, remaining: int, explicit_addresses: set[bytes]) -> None:
        """Enqueue account-trie nodes that reached their commit point, have
        no dirty children, and (for leaves) are not explicitly accessed by
        any remaining transaction."""
        self.remaining = remaining
        trie = self.db.account_trie
        for node in list(trie.dirty_nodes):
            with node.lock:
                if not node.dirty:
                    continue
                if node.enqueued_version == node.version:
                    continue
                if remaining > commit_point(node.level, self.cfg):
                    continue
                if self._has_dirty_child(node):
                    continue
                if isinstance(node, Leaf) and node.meta and node.meta[0] in explicit_addresses:
                    continue
                node.enqueued_version = node.version
            self.q_hash.put((node, node.enqueued_version))

    @staticmethod
    def _has_dirty_child(node: TrieNode) -> bool:
        if isinstance(node, Extension):
            child = node.child
            return isinstance(child, TrieNode) and child.dirty
        if isinstance(node, Branch):
            return any(isinstance(c, TrieNode) and c.dirty for c in node.children)
        return False

    def _hash_loop(self) -> None:
        trie = self.db.account_trie
        while True:
            item = self.q_hash.get()
            if item is None or self.crashed:
                self.q_hash.task_done()
                return
            node, version = item
            try:
                if self._crash("mid-hash"):
                    return
                first = True
                while node is not None:
                    result = self._try_hash(node, version if first else None)
                    if result is None:
                        break
                    self.q_store.put(result)
                    node = node.parent
                    first = False
            finally:
                self.q_hash.task_done()

    def _try_hash(self, node: TrieNode, expect_version: Optional[int]):
        trie = self.db.account_trie
        with node.lock:
            if not node.dirty:
                return None
            if expect_version is not None and node.version != expect_version:
                return None  # modified since enqueue: stale, drop
            # ascended parents obey commit points too, so every early hash
            # carries the alpha re-dirty guarantee
            if self.remaining > commit_point(node.level, self.cfg):
                return None
            if self._has_dirty_child(node):
                return None
            data = serialize(node)
            digest = self.db.hash_fn(data)
            node.cached_hash = digest
            node.dirty = False
            version = node.version
            if self.remaining > 0 and 2 <= node.level <= 3:
                node.early_hashed = True
                trie.early_hash_total += 1
                trie.early_hashed_nodes.add(node)
        trie.dirty_nodes.discard(node)
        return (node, version, digest, data)

    def _store_loop(self) -> None:
        db = self.db
        while True:
            item = self.q_store.get()
            if item is None or self.crashed:
                self.q_store.task_done()
                return
            node, version, digest, data = item
            try:
                if self._crash("mid-store"):
                    return
                with node.lock:
                    if node.version != version:
                        continue  # stale: a newer modification owns this node
                    db.store.put(NODE_PREFIX + digest, data)
                    db.counters.node_db_writes += 1
                    if isinstance(node, Leaf) and node.meta is not None:
                        direct_key, direct_value = node.meta
                        db.store.put(DIRECT_PREFIX + direct_key + _h8(self.height), direct_value)
                        db.counters.direct_db_writes += 1
                        db.direct_index[direct_key] = (self.height, direct_value)
            finally:
                self.q_store.task_done()

    # -- barriers ------------------------------------------------------

    def _join(self, q: queue.Queue) -> None:
        while q.unfinished_tasks:
            if self.crashed:
                raise CrashSimulated()
            time.sleep(0.0005)

    def wait_retrieval(self) -> None:
        self._join(self.q_ret)

    def wait_storage_commit(self) -> None:
        self._join(self.q_commit)

    def wait_account_commit(self) -> None:
        """Drain hash/store until the account trie has no dirty nodes."""
        trie = self.db.account_trie
        for _ in range(10000):
            if self.crashed:
                raise CrashSimulated()
            if not trie.has_dirty():
                self._join(self.q_hash)
                self._join(self.q_store)
                if not trie.has_dirty():
                    return
                continue
            self.async_commit_account(0, set())
            self._join(self.q_hash)
            self._join(self.q_store)
        raise RuntimeError("account-trie drain did not converge")

    def finalize(self) -> bytes:
        """Block-end barrier; persists the meta root record and returns it."""
        self.wait_storage_commit()
        self.wait_account_commit()
        trie = self.db.account_trie
        root = trie.root_digest()
        # hashes surviving to block end were useful: not waste candidates
        for node in trie.early_hashed_nodes:
            node.early_hashed = False
        trie.early_hashed_nodes.clear()
        self.db.write_meta(self.height, root)
        if self._crash("post-meta"):
            # the root record is already durable; only volatile state is lost
            raise CrashSimulated()
        return root
