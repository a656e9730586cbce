"""Merkle Patricia Trie: node model, canonical serialization, hashing,
insert/get, path loading, synchronous commit, and proof generation.

Node references are either in-memory node objects or 32-byte digests; a
digest resolves through the shared node cache or the node database.  Keys
are arbitrary byte strings (callers hash account addresses / slot indices
before use).  Deletion is unsupported.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Union

from .keccak import keccak256
from .kvstore import NODE_PREFIX
from .nibbles import (
    MalformedEncoding,
    bytes_to_nibbles,
    common_prefix_len,
    decode_path,
    decode_varint,
    encode_path,
    encode_varint,
)

TAG_LEAF = 0
TAG_EXTENSION = 1
TAG_BRANCH = 2


class MissingNode(KeyError):
    """A referenced digest is absent from the node database."""


class ChildNotHashed(RuntimeError):
    """hash/serialize requested on a node whose child lacks a digest."""


class KeyAbsent(KeyError):
    pass


class BadProof(ValueError):
    pass


NodeRef = Union["TrieNode", bytes, None]


class TrieNode:
    __slots__ = (
        "dirty", "cached_hash", "version", "lock", "parent", "level",
        "enqueued_version", "early_hashed",
    )

    def __init__(self):
        self.dirty = True
        self.cached_hash: Optional[bytes] = None
        self.version = 0
        self.lock = threading.Lock()
        self.parent: Optional[TrieNode] = None
        self.level = 0
        self.enqueued_version = -1
        self.early_hashed = False


class Leaf(TrieNode):
    __slots__ = ("path", "value", "meta")

    def __init__(self, path: bytes, value: bytes, meta=None):
        super().__init__()
        self.path = path
        self.value = value
        self.meta = meta  # (direct_key, direct_value) for state leaves

    def copy(self):
        return Leaf(self.path, self.value, self.meta)


class Extension(TrieNode):
    __slots__ = ("path", "child")

    def __init__(self, path: bytes, child: NodeRef):
        super().__init__()
        self.path = path
        self.child = child

    def copy(self):
        return Extension(self.path, self.child)


class Branch(TrieNode):
    __slots__ = ("children", "value")

    def __init__(self):
        super().__init__()
        self.children: list[NodeRef] = [None] * 16
        self.value: Optional[bytes] = None

    def copy(self):
        node = Branch()
        node.children = list(self.children)
        node.value = self.value
        return node


def serialize(node: TrieNode) -> bytes:
    """Canonical byte encoding; object-form children must carry digests."""
    if isinstance(node, Leaf):
        value = node.value
        return bytes([TAG_LEAF]) + encode_path(node.path) + encode_varint(len(value)) + value
    if isinstance(node, Extension):
        return bytes([TAG_EXTENSION]) + encode_path(node.path) + _ref_digest(node.child)
    if isinstance(node, Branch):
        bitmap = 0
        digests = []
        for i, child in enumerate(node.children):
            if child is not None:
                bitmap |= 1 << i
                digests.append(_ref_digest(child))
        out = bytes([TAG_BRANCH]) + bitmap.to_bytes(2, "big")
        out += b"\x01" if node.value is not None else b"\x00"
        out += b"".join(digests)
        if node.value is not None:
            out += encode_varint(len(node.value)) + node.value
        return out
    raise TypeError(type(node))


def _ref_digest(ref: NodeRef) -> bytes:
    if isinstance(ref, bytes):
        return ref
    if isinstance(ref, TrieNode):
        if ref.dirty or ref.cached_hash is None:
            raise ChildNotHashed("child has no digest")
        return ref.cached_hash
    raise TypeError(type(ref))


def deserialize(data: bytes) -> TrieNode:
    if not data:
        raise MalformedEncoding("empty node encoding")
    tag = data[0]
    if tag == TAG_LEAF:
        path, off = decode_path(data, 1)
        vlen, off = decode_varint(data, off)
        value = data[off : off + vlen]
        if len(value) != vlen or off + vlen != len(data):
            raise MalformedEncoding("bad leaf length")
        if not value:
            raise MalformedEncoding("leaf with empty value")
        node = Leaf(path, value)
    elif tag == TAG_EXTENSION:
        path, off = decode_path(data, 1)
        if not path:
            raise MalformedEncoding("extension with empty path")
        if len(data) - off != 32:
            raise MalformedEncoding("bad extension child")
        node = Extension(path, data[off:])
    elif tag == TAG_BRANCH:
        if len(data) < 4:
            raise MalformedEncoding("truncated branch")
        bitmap = int.from_bytes(data[1:3], "big")
        has_value = data[3]
        if has_value not in (0, 1):
            raise MalformedEncoding("bad value flag")
        node = Branch()
        off = 4
        count = 0
        for i in range(16):
            if bitmap & (1 << i):
                if off + 32 > len(data):
                    raise MalformedEncoding("truncated branch child")
                node.children[i] = data[off : off + 32]
                off += 32
                count += 1
        if has_value:
            vlen, off = decode_varint(data, off)
            node.value = data[off : off + vlen]
            if len(node.value) != vlen:
                raise MalformedEncoding("bad branch value")
            off += vlen
        if off != len(data):
            raise MalformedEncoding("trailing bytes")
        if count == 0:
            raise MalformedEncoding("branch with no children")
        if count == 1 and not has_value:
            raise MalformedEncoding("non-canonical single-child branch")
    else:
        raise MalformedEncoding(f"unknown tag {tag}")
    node.dirty = False
    return node


def hash_node(node: TrieNode, hash_fn: Callable[[bytes], bytes] = keccak256) -> bytes:
    """Hash a node whose children already carry digests; clears dirty."""
    data = serialize(node)
    digest = hash_fn(data)
    node.cached_hash = digest
    node.dirty = False
    return digest


class Trie:
    """One MPT instance (account trie or a contract's storage trie)."""

    def __init__(self, store, root: NodeRef = None,
                 hash_fn: Callable[[bytes], bytes] = keccak256,
                 node_cache: Optional[dict] = None, counters=None):
        self.store = store
        self.root: NodeRef = root
        self.hash_fn = hash_fn
        self.node_cache = node_cache if node_cache is not None else {}
        self.counters = counters
        self.lock = threading.RLock()
        self.dirty_nodes: set[TrieNode] = set()
        # early-hash bookkeeping for the pipelined workflow; flags are
        # per-block (cleared by the pipeline at finalize)
        self.early_hashed_nodes: set[TrieNode] = set()
        self.early_hash_total = 0
        self.early_rehash_total = 0

    # -- reads ---------------------------------------------------------

    def get(self, key: bytes) -> Optional[bytes]:
        with self.lock:
            return self._get(self.root, bytes_to_nibbles(key), attach=True, parent=None, level=0)

    def _get(self, ref: NodeRef, nibs: bytes, attach: bool, parent, level: int):
        while True:
            if ref is None:
                return None
            if isinstance(ref, bytes):
                node = self._resolve(ref, parent, level) if attach else self._load(ref)
                if attach and parent is not None:
                    self._replace_child(parent, node)
                elif attach:
                    self.root = node
                ref = node
                continue
            node = ref
            if isinstance(node, Leaf):
                return node.value if node.path == nibs else None
            if isinstance(node, Extension):
                if nibs[: len(node.path)] != node.path:
                    return None
                nibs = nibs[len(node.path) :]
                parent, level = node, level + len(node.path)
                ref = node.child
                continue
            # branch
            if not nibs:
                return node.value
            parent, level = node, level + 1
            ref, nibs = node.children[nibs[0]], nibs[1:]

    def load_path(self, key: bytes) -> Optional[bytes]:
        """Warm the node cache along ``key``'s search path without mutating
        the trie structure; returns the value if present."""
        nibs = bytes_to_nibbles(key)
        with self.lock:
            ref = self.root
            # walk the in-memory portion under the structure lock
            while isinstance(ref, TrieNode):
                node = ref
                if isinstance(node, Leaf):
                    return node.value if node.path == nibs else None
                if isinstance(node, Extension):
                    if nibs[: len(node.path)] != node.path:
                        return None
                    nibs = nibs[len(node.path) :]
                    ref = node.child
                else:
                    if not nibs:
                        return node.value
                    ref, nibs = node.children[nibs[0]], nibs[1:]
        # remaining references are persisted content, immutable by digest
        while True:
            if ref is None:
                return None
            node = self._load(ref)
            if isinstance(node, Leaf):
                return node.value if node.path == nibs else None
            if isinstance(node, Extension):
                if nibs[: len(node.path)] != node.path:
                    return None
                nibs = nibs[len(node.path) :]
                ref = node.child
            else:
                if not nibs:
                    return node.value
                ref, nibs = node.children[nibs[0]], nibs[1:]

    def _load(self, digest: bytes) -> TrieNode:
        """Fetch a node by digest via cache or the node database."""
        node = self.node_cache.get(digest)
        if node is not None:
            return node
        data = self.store.get(NODE_PREFIX + digest)
        if data is None:
            raise MissingNode(digest.hex())
        if self.counters is not None:
            self.counters.node_db_reads += 1
        node = deserialize(data)
        node.cached_hash = digest
        self.node_cache[digest] = node
        return node

    def _resolve(self, digest: bytes, parent, level: int) -> TrieNode:
        """Materialize a digest ref as a private node object for this trie."""
        node = self._load(digest).copy()
        node.dirty = False
        node.cached_hash = digest
        node.parent = parent
        node.level = level
        return node

    def _replace_child(self, parent: TrieNode, node: TrieNode) -> None:
        if isinstance(parent, Extension):
            parent.child = node
        else:
            for i, c in enumerate(parent.children):
                if isinstance(c, bytes) and c == node.cached_hash:
                    parent.children[i] = node
                    return

    # -- writes --------------------------------------------------------

    def insert(self, key: bytes, value: bytes, meta=None) -> None:
        if not value:
            raise ValueError("empty values unsupported (no deletion)")
        nibs = bytes_to_nibbles(key)
        with self.lock:
            self.root = self._insert(self.root, nibs, value, meta, None, 0)
            self.root.parent = None

    def _touch(self, node: TrieNode) -> None:
        with node.lock:
            node.version += 1
            node.dirty = True
            if node.early_hashed:
                node.early_hashed = False
                self.early_rehash_total += 1
                self.early_hashed_nodes.discard(node)
        self.dirty_nodes.add(node)

    def _detach(self, node: TrieNode) -> None:
        with node.lock:
            node.version += 1
            node.dirty = False
            node.parent = None
        self.dirty_nodes.discard(node)

    def _new(self, node: TrieNode, parent, level: int) -> TrieNode:
        node.parent = parent
        node.level = level
        self.dirty_nodes.add(node)
        return node

    def _insert(self, ref: NodeRef, nibs: bytes, value: bytes, meta, parent, level: int) -> TrieNode:
        if ref is None:
            return self._new(Leaf(nibs, value, meta), parent, level)
        if isinstance(ref, bytes):
            ref = self._resolve(ref, parent, level)
        node = ref
        if isinstance(node, Leaf):
            if node.path == nibs:
                with node.lock:
                    node.value = value
                    if meta is not None:
                        node.meta = meta
                self._touch(node)
                return node
            return self._split(node.path, node, nibs, value, meta, parent, level)
        if isinstance(node, Extension):
            cp = common_prefix_len(node.path, nibs)
            if cp == len(node.path):
                child = self._insert(node.child, nibs[cp:], value, meta, node, level + cp)
                node.child = child
                child.parent = node
                self._touch(node)
                return node
            return self._split_extension(node, nibs, value, meta, parent, level, cp)
        # branch
        if not nibs:
            node.value = value
            self._touch(node)
            return node
        idx = nibs[0]
        child = self._insert(node.children[idx], nibs[1:], value, meta, node, level + 1)
        node.children[idx] = child
        child.parent = node
        self._touch(node)
        return node

    def _split(self, old_path: bytes, old_leaf: Leaf, nibs: bytes, value: bytes,
               meta, parent, level: int) -> TrieNode:
        """Split a leaf against a diverging key into extension/branch form."""
        cp = common_prefix_len(old_path, nibs)
        branch = Branch()
        branch_level = level + cp
        self._new(branch, parent, branch_level)
        # old leaf side
        if cp == len(old_path):
            branch.value = old_leaf.value
            self._detach(old_leaf)
        else:
            moved = self._new(Leaf(old_path[cp + 1 :], old_leaf.value, old_leaf.meta),
                              branch, branch_level + 1)
            branch.children[old_path[cp]] = moved
            self._detach(old_leaf)
        # new key side
        if cp == len(nibs):
            branch.value = value
        else:
            leaf = self._new(Leaf(nibs[cp + 1 :], value, meta), branch, branch_level + 1)
            branch.children[nibs[cp]] = leaf
        self._touch(branch)
        if cp:
            ext = self._new(Extension(nibs[:cp], branch), parent, level)
            branch.parent = ext
            branch.level = level + cp
            self._touch(ext)
            return ext
        return branch

    def _split_extension(self, ext: Extension, nibs: bytes, value: bytes, meta,
                         parent, level: int, cp: int) -> TrieNode:
        branch = Branch()
        branch_level = level + cp
        self._new(branch, parent, branch_level)
        # existing subtree side
        rest = ext.path[cp + 1 :]
        if rest:
            sub = self._new(Extension(rest, ext.child), branch, branch_level + 1)
            if isinstance(ext.child, TrieNode):
                ext.child.parent = sub
            branch.children[ext.path[cp]] = sub
            self._touch(sub)
        else:
            child = ext.child
            branch.children[ext.path[cp]] = child
            if isinstance(child, TrieNode):
                child.parent = branch
        # new key side
        if cp == len(nibs):
            branch.value = value
        else:
            leaf = self._new(Leaf(nibs[cp + 1 :], value, meta), branch, branch_level + 1)
            branch.children[nibs[cp]] = leaf
        self._touch(branch)
        self._detach(ext)
        if cp:
            wrapper = self._new(Extension(nibs[:cp], branch), parent, level)
            branch.parent = wrapper
            self._touch(wrapper)
            return wrapper
        return branch

    # -- commit --------------------------------------------------------

    def commit(self, batch: Optional[list] = None) -> bytes:
        """Hash all dirty nodes bottom-up and persist them; returns root digest."""
        own_batch = batch is None
        if own_batch:
            batch = []
        with self.lock:
            root = self.root_digest(batch)
        if own_batch and batch:
            self.store.write_batch(batch)
            if self.counters is not None:
                self.counters.node_db_writes += len(batch)
        elif not own_batch and self.counters is not None:
            pass  # caller accounts for the batch it flushes
        return root

    def root_digest(self, batch: Optional[list] = None) -> bytes:
        if self.root is None:
            return self.hash_fn(b"")
        if isinstance(self.root, bytes):
            return self.root
        return self._commit_node(self.root, batch)

    def _commit_node(self, ref: NodeRef, batch: Optional[list]) -> bytes:
        if isinstance(ref, bytes):
            return ref
        node = ref
        if not node.dirty and node.cached_hash is not None:
            return node.cached_hash
        if isinstance(node, Extension):
            self._commit_node(node.child, batch)
        elif isinstance(node, Branch):
            for child in node.children:
                if isinstance(child, TrieNode):
                    self._commit_node(child, batch)
        data = serialize(node)
        digest = self.hash_fn(data)
        with node.lock:
            node.cached_hash = digest
            node.dirty = False
        self.dirty_nodes.discard(node)
        if batch is not None:
            batch.append((NODE_PREFIX + digest, data))
        else:
            self.store.put(NODE_PREFIX + digest, data)
            if self.counters is not None:
                self.counters.node_db_writes += 1
        self.node_cache[digest] = node
        return digest

    def has_dirty(self) -> bool:
        return bool(self.dirty_nodes)

    # -- proofs --------------------------------------------------------

    def prove(self, key: bytes) -> list[bytes]:
        """Serialized nodes on the root-to-leaf path of a present key."""
        nibs = bytes_to_nibbles(key)
        proof: list[bytes] = []
        with self.lock:
            self.root_digest()  # ensure digests are current
            ref = self.root
            while ref is not None:
                node = self._load(ref) if isinstance(ref, bytes) else ref
                proof.append(serialize(node))
                if isinstance(node, Leaf):
                    if node.path == nibs:
                        return proof
                    break
                if isinstance(node, Extension):
                    if nibs[: len(node.path)] != node.path:
                        break
                    nibs = nibs[len(node.path) :]
                    ref = node.child
                else:
                    if not nibs:
                        if node.value is not None:
                            return proof
                        break
                    ref, nibs = node.children[nibs[0]], nibs[1:]
        raise KeyAbsent(key.hex())


def verify_proof(root: bytes, key: bytes, proof: list[bytes],
                 hash_fn: Callable[[bytes], bytes] = keccak256) -> bytes:
    """Independent hash-chain check; returns the proven value or raises."""
    if not proof:
        raise BadProof("empty proof")
    nibs = bytes_to_nibbles(key)
    expect = root
    for i, data in enumerate(proof):
        if hash_fn(data) != expect:
            raise BadProof(f"digest mismatch at element {i}")
        try:
            node = deserialize(data)
        except MalformedEncoding as exc:
            raise BadProof(str(exc)) from exc
        if isinstance(node, Leaf):
            if node.path != nibs or i != len(proof) - 1:
                raise BadProof("leaf does not terminate the key")
            return node.value
        if isinstance(node, Extension):
            if nibs[: len(node.path)] != node.path:
                raise BadProof("path divergence")
            nibs = nibs[len(node.path) :]
            expect = node.child
        else:
            if not nibs:
                if node.value is None or i != len(proof) - 1:
                    raise BadProof("missing branch value")
                return node.value
            nxt = node.children[nibs[0]]
            if not isinstance(nxt, bytes):
                raise BadProof("dangling branch slot")
            expect, nibs = nxt, nibs[1:]
    raise BadProof("proof exhausted before key")
