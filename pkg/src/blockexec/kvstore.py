"""Key-value backends for trie nodes, direct state records, and block metadata.

Both backends expose the same interface: point ``get``/``put``, atomic
``write_batch``, and ``scan`` over a key prefix.  ``FileStore`` is an
append-only log of checksummed batches; a torn tail (crash mid-append) is
dropped on replay, so every batch is all-or-nothing.
"""

from __future__ import annotations

import os
import struct
import threading
import zlib
from typing import Iterable, Iterator, Optional

# namespace prefixes within one store
NODE_PREFIX = b"n"
DIRECT_PREFIX = b"d"
META_PREFIX = b"m"


class StorageFailure(RuntimeError):
    pass


class MemoryStore:
    """Dict-backed store; survives as long as the object does."""

    def __init__(self):
        self._data: dict[bytes, bytes] = {}
        self._lock = threading.Lock()

    def get(self, key: bytes) -> Optional[bytes]:
        return self._data.get(key)

    def put(self, key: bytes, value: bytes) -> None:
        with self._lock:
            self._data[key] = value

    def write_batch(self, items: Iterable[tuple[bytes, bytes]]) -> None:
        with self._lock:
            self._data.update(items)

    def scan(self, prefix: bytes) -> Iterator[tuple[bytes, bytes]]:
        with self._lock:
            snapshot = [(k, v) for k, v in self._data.items() if k.startswith(prefix)]
        return iter(sorted(snapshot))

    def close(self) -> None:
        pass

    def __len__(self):
        return len(self._data)


_REC_HEADER = struct.Struct("<I")  # payload length


class FileStore:
    """Append-only log store with atomic batches and in-memory index."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._index: dict[bytes, bytes] = {}
        mode = "r+b" if os.path.exists(path) else "w+b"
        try:
            self._fh = open(path, mode)
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        self._replay()

    def _replay(self) -> None:
        self._fh.seek(0)
        good_end = 0
        while True:
            header = self._fh.read(_REC_HEADER.size)
            if len(header) < _REC_HEADER.size:
                break
            (length,) = _REC_HEADER.unpack(header)
            payload = self._fh.read(length + 4)
            if len(payload) < length + 4:
                break
            body, crc = payload[:length], payload[length:]
            if zlib.crc32(body) != struct.unpack("<I", crc)[0]:
                break
            self._apply(body)
            good_end = self._fh.tell()
        # drop any torn tail so future appends start at a clean boundary
        self._fh.truncate(good_end)
        self._fh.seek(good_end)

    def _apply(self, body: bytes) -> None:
        off = 0
        (count,) = struct.unpack_from("<I", body, off)
        off += 4
        for _ in range(count):
            klen, vlen = struct.unpack_from("<II", body, off)
            off += 8
            key = body[off : off + klen]
            off += klen
            value = body[off : off + vlen]
            off += vlen
            self._index[key] = value

    def get(self, key: bytes) -> Optional[bytes]:
        return self._index.get(key)

    def put(self, key: bytes, value: bytes) -> None:
        self.write_batch([(key, value)])

    def write_batch(self, items: Iterable[tuple[bytes, bytes]]) -> None:
        items = list(items)
        if not items:
            return
        parts = [struct.pack("<I", len(items))]
        for key, value in items:
            parts.append(struct.pack("<II", len(key), len(value)))
            parts.append(key)
            parts.append(value)
        body = b"".join(parts)
        record = _REC_HEADER.pack(len(body)) + body + struct.pack("<I", zlib.crc32(body))
        with self._lock:
            try:
                self._fh.write(record)
                self._fh.flush()
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
            for key, value in items:
                self._index[key] = value

    def scan(self, prefix: bytes) -> Iterator[tuple[bytes, bytes]]:
        with self._lock:
            snapshot = [(k, v) for k, v in self._index.items() if k.startswith(prefix)]
        return iter(sorted(snapshot))

    def close(self) -> None:
        self._fh.close()

    def __len__(self):
        return len(self._index)


def open_store(backend: str, path: Optional[str] = None):
    if backend == "memory":
        return MemoryStore()
    if backend == "file":
        if not path:
            raise ValueError("file backend needs a path")
        return FileStore(path)
    raise ValueError(f"unknown backend {backend!r}")
