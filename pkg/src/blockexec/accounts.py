"""Account state model and the canonical state-key / record encodings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

ADDRESS_LEN = 20
SLOT_LEN = 32

ZERO_VALUE = b""


@dataclass
class AccountState:
    balance: int = 0
    nonce: int = 0
    code_hash: bytes = b""
    storage_root: bytes = b""

    def is_contract(self) -> bool:
        return bool(self.code_hash)


def encode_state_key(address: bytes, slot: Optional[bytes] = None) -> bytes:
    """A||k concatenation; length disambiguates account vs slot entries."""
    if len(address) != ADDRESS_LEN:
        raise ValueError("address must be 20 bytes")
    if slot is None:
        return address
    if len(slot) != SLOT_LEN:
        raise ValueError("slot must be 32 bytes")
    return address + slot


def decode_state_key(key: bytes) -> tuple[bytes, Optional[bytes]]:
    if len(key) == ADDRESS_LEN:
        return key, None
    if len(key) == ADDRESS_LEN + SLOT_LEN:
        return key[:ADDRESS_LEN], key[ADDRESS_LEN:]
    raise ValueError(f"bad state key length {len(key)}")


def encode_account(state: AccountState, with_storage_root: bool = True) -> bytes:
    """Fixed-layout encoding: flags, balance, nonce, optional hashes.

    Direct records store the logical form (without storage root); trie
    leaves store the full form.
    """
    flags = 0
    if state.code_hash:
        flags |= 1
    if with_storage_root and state.storage_root:
        flags |= 2
    out = bytes([flags]) + state.balance.to_bytes(32, "big") + state.nonce.to_bytes(8, "big")
    if flags & 1:
        out += state.code_hash
    if flags & 2:
        out += state.storage_root
    return out


def decode_account(data: bytes) -> AccountState:
    if not data:
        return AccountState()
    flags = data[0]
    balance = int.from_bytes(data[1:33], "big")
    nonce = int.from_bytes(data[33:41], "big")
    off = 41
    code_hash = b""
    storage_root = b""
    if flags & 1:
        code_hash = data[off : off + 32]
        off += 32
    if flags & 2:
        storage_root = data[off : off + 32]
        off += 32
    return AccountState(balance, nonce, code_hash, storage_root)


def strip_storage_root(leaf_value: bytes) -> bytes:
    """Logical account bytes (direct-record form) from a trie leaf value."""
    state = decode_account(leaf_value)
    return encode_account(state, with_storage_root=False)
