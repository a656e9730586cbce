"""Batch-based optimistic parallel transaction execution engine with an
asynchronous authenticated state database (Merkle Patricia Trie)."""

from .accounts import AccountState, decode_account, encode_account, encode_state_key
from .executor import (
    Block,
    ParallelEngine,
    SerialEngine,
    Transaction,
    batch_fetch,
    execute_tx,
    explicit_conflict,
)
from .keccak import keccak256
from .kvstore import FileStore, MemoryStore, open_store
from .pipeline import CrashSimulated, Pipeline, commit_point
from .statedb import CommitConfig, CorruptMeta, StateDB, StateView
from .trie import Trie, verify_proof
from .workload import WorkloadSpec, gen_block, genesis

__all__ = [
    "AccountState",
    "Block",
    "CommitConfig",
    "CorruptMeta",
    "CrashSimulated",
    "FileStore",
    "MemoryStore",
    "ParallelEngine",
    "Pipeline",
    "SerialEngine",
    "StateDB",
    "StateView",
    "Transaction",
    "Trie",
    "WorkloadSpec",
    "batch_fetch",
    "commit_point",
    "decode_account",
    "encode_account",
    "encode_state_key",
    "execute_tx",
    "explicit_conflict",
    "gen_block",
    "genesis",
    "keccak256",
    "open_store",
    "verify_proof",
]
