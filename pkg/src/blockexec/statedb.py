"""State database: direct state reads through a side table, write caching,
hierarchical account/storage tries, the synchronous three-phase commit
baseline, and crash recovery.

Logical values (what execution reads and writes) are keyed by A or A||k.
Account logical values omit the storage root; trie leaves carry it.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from typing import Optional

from .accounts import (
    ADDRESS_LEN,
    ZERO_VALUE,
    AccountState,
    decode_account,
    encode_account,
    encode_state_key,
)
from .keccak import keccak256
from .kvstore import DIRECT_PREFIX, META_PREFIX
from .trie import Trie


class QueueClosed(RuntimeError):
    pass


class CorruptMeta(RuntimeError):
    """No durable root record exists for the requested height."""


@dataclass
class CommitConfig:
    alpha: float = 0.9
    mu: float = 2.0
    block_size: int = 4000
    workers: int = 4
    retrieval_threads: int = 2
    commit_threads: int = 2

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        for name in ("block_size", "workers", "retrieval_threads", "commit_threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class Counters:
    node_db_reads: int = 0
    node_db_writes: int = 0
    direct_db_reads: int = 0
    direct_db_writes: int = 0

    def snapshot(self) -> dict:
        return dict(self.__dict__)


def _h8(height: int) -> bytes:
    return struct.pack(">Q", height)


class StateDB:
    """Global state database S, opened at the latest committed height."""

    def __init__(self, store, cfg: Optional[CommitConfig] = None, hash_fn=keccak256):
        self.store = store
        self.cfg = cfg or CommitConfig()
        self.hash_fn = hash_fn
        self.counters = Counters()
        self.node_cache: dict[bytes, object] = {}
        self.state_cache: dict[bytes, bytes] = {}
        self.direct_index: dict[bytes, tuple[int, bytes]] = {}
        self.storage_tries: dict[bytes, Trie] = {}
        self.storage_lock = threading.Lock()
        self._key_hashes: dict[bytes, bytes] = {}
        self.pipeline = None
        self.height = -1
        self.account_trie = self._new_account_trie(None)
        latest = self.latest_height()
        if latest is not None:
            self.recover(latest)

    # -- setup ---------------------------------------------------------

    def _new_account_trie(self, root) -> Trie:
        return Trie(self.store, root=root, hash_fn=self.hash_fn,
                    node_cache=self.node_cache, counters=self.counters)

    def latest_height(self) -> Optional[int]:
        best = None
        for key, _ in self.store.scan(META_PREFIX):
            h = struct.unpack(">Q", key[len(META_PREFIX):])[0]
            best = h if best is None else max(best, h)
        return best

    def key_hash(self, raw: bytes) -> bytes:
        h = self._key_hashes.get(raw)
        if h is None:
            h = self.hash_fn(raw)
            self._key_hashes[raw] = h
        return h

    # -- direct reads / cached writes ----------------------------------

    def state_get(self, address: bytes, slot: Optional[bytes] = None) -> bytes:
        key = encode_state_key(address, slot)
        value = self.state_cache.get(key)
        if value is None:
            self.counters.direct_db_reads += 1
            rec = self.direct_index.get(key)
            value = rec[1] if rec is not None else ZERO_VALUE
            self.state_cache[key] = value
        return value

    def peek_state(self, address: bytes, slot: Optional[bytes] = None) -> bytes:
        """Read without populating the coordinator-owned state cache."""
        key = encode_state_key(address, slot)
        value = self.state_cache.get(key)
        if value is not None:
            return value
        rec = self.direct_index.get(key)
        return rec[1] if rec is not None else ZERO_VALUE

    def state_set(self, address: bytes, slot: Optional[bytes], value: bytes) -> None:
        key = encode_state_key(address, slot)
        self.state_cache[key] = value
        if self.pipeline is not None:
            self.pipeline.push_retrieval(address, slot, value)

    def get_account(self, address: bytes) -> AccountState:
        return decode_account(self.state_get(address))

    def light_copy(self) -> "StateView":
        return StateView(self)

    # -- trie access ---------------------------------------------------

    def committed_account_value(self, address: bytes) -> Optional[bytes]:
        """Full account leaf value (with storage root) via trie traversal."""
        return self.account_trie.get(self.key_hash(address))

    def committed_slot_value(self, address: bytes, slot: bytes) -> Optional[bytes]:
        leaf = self.committed_account_value(address)
        if leaf is None:
            return None
        root = decode_account(leaf).storage_root
        if not root:
            return None
        trie = Trie(self.store, root=root, hash_fn=self.hash_fn,
                    node_cache=self.node_cache, counters=self.counters)
        return trie.get(self.key_hash(slot))

    def storage_trie(self, address: bytes) -> Trie:
        with self.storage_lock:
            trie = self.storage_tries.get(address)
            if trie is None:
                leaf = self.account_trie.get(self.key_hash(address))
                root = decode_account(leaf).storage_root if leaf else b""
                trie = Trie(self.store, root=root or None, hash_fn=self.hash_fn,
                            node_cache=self.node_cache, counters=self.counters)
                self.storage_tries[address] = trie
            return trie

    def current_storage_root(self, address: bytes) -> bytes:
        """Root recorded on the in-memory account leaf, b'' when no storage."""
        leaf = self.account_trie.get(self.key_hash(address))
        return decode_account(leaf).storage_root if leaf else b""

    # -- synchronous three-phase commit --------------------------------

    def commit_block_sync(self, writes: dict[bytes, bytes], height: int) -> bytes:
        """Update, hash, and store all dirty nodes for one block's committed
        write set; also persists direct records and the height->root meta
        record in one atomic batch.  Returns the new account-trie root."""
        per_account: dict[bytes, dict[bytes, bytes]] = {}
        acct_values: dict[bytes, bytes] = {}
        for key, value in writes.items():
            if len(key) == ADDRESS_LEN:
                acct_values[key] = value
            else:
                per_account.setdefault(key[:ADDRESS_LEN], {})[key[ADDRESS_LEN:]] = value
        batch: list[tuple[bytes, bytes]] = []
        touched = set(per_account) | set(acct_values)
        for address in sorted(touched):
            slots = per_account.get(address)
            if slots:
                trie = self.storage_trie(address)
                for slot, value in sorted(slots.items()):
                    trie.insert(self.key_hash(slot), value)
                storage_root = trie.root_digest(batch)
            else:
                storage_root = self.current_storage_root(address)
            logical = acct_values.get(address)
            if logical is None:
                logical = self.state_get(address)
            state = decode_account(logical)
            state.storage_root = storage_root
            self.account_trie.insert(
                self.key_hash(address),
                encode_account(state, with_storage_root=True),
                meta=(address, encode_account(state, with_storage_root=False)),
            )
        root = self.account_trie.root_digest(batch)
        node_writes = len(batch)
        for key, value in writes.items():
            batch.append((DIRECT_PREFIX + key + _h8(height), value))
        batch.append((META_PREFIX + _h8(height), root))
        self.store.write_batch(batch)
        self.counters.node_db_writes += node_writes
        self.counters.direct_db_writes += len(writes)
        for key, value in writes.items():
            self.direct_index[key] = (height, value)
            self.state_cache[key] = value
        self.height = height
        return root

    def write_meta(self, height: int, root: bytes) -> None:
        self.store.write_batch([(META_PREFIX + _h8(height), root)])
        self.height = height

    # -- recovery (height-versioned direct records) --------------------

    def recover(self, replay_height: int) -> None:
        """Re-root at ``replay_height``; direct reads behave as of that
        height, discarding any records from a partially written block."""
        meta = self.store.get(META_PREFIX + _h8(replay_height))
        if meta is None:
            raise CorruptMeta(f"no durable root for height {replay_height}")
        self.node_cache.clear()
        self.state_cache.clear()
        self.storage_tries.clear()
        self.direct_index = {}
        for key, value in self.store.scan(DIRECT_PREFIX):
            body = key[len(DIRECT_PREFIX):]
            logical, height = body[:-8], struct.unpack(">Q", body[-8:])[0]
            if height > replay_height:
                continue
            prev = self.direct_index.get(logical)
            if prev is None or prev[0] < height:
                self.direct_index[logical] = (height, value)
        self.account_trie = self._new_account_trie(meta)
        self.height = replay_height


class StateView:
    """Copy-on-write view over the state database for one transaction.

    Reads fall through to the database snapshot; writes stay private.
    Every accessed key is recorded for conflict detection.
    """

    __slots__ = ("db", "writes", "reads")

    def __init__(self, db: StateDB):
        self.db = db
        self.writes: dict[bytes, bytes] = {}
        self.reads: set[bytes] = set()

    def get(self, address: bytes, slot: Optional[bytes] = None) -> bytes:
        key = encode_state_key(address, slot)
        self.reads.add(key)
        if key in self.writes:
            return self.writes[key]
        return self.db.state_get(address, slot)

    def set(self, address: bytes, slot: Optional[bytes], value: bytes) -> None:
        self.writes[encode_state_key(address, slot)] = value

    def get_account(self, address: bytes) -> AccountState:
        return decode_account(self.get(address))

    def set_account(self, address: bytes, state: AccountState) -> None:
        self.set(address, None, encode_account(state, with_storage_root=False))
