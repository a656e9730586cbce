"""Nibble-path helpers for trie navigation and canonical path encoding.

A nibble path is a ``bytes`` object whose elements are all in [0, 15],
most-significant nibble of each source byte first.
"""

from __future__ import annotations


class MalformedEncoding(ValueError):
    """Raised when decoding bytes that violate the canonical encoding."""


def bytes_to_nibbles(data: bytes) -> bytes:
    out = bytearray(len(data) * 2)
    for i, b in enumerate(data):
        out[2 * i] = b >> 4
        out[2 * i + 1] = b & 0x0F
    return bytes(out)


def nibbles_to_bytes(nibbles: bytes) -> bytes:
    if len(nibbles) % 2:
        raise ValueError("odd-length nibble sequence has no byte form")
    out = bytearray(len(nibbles) // 2)
    for i in range(0, len(nibbles), 2):
        out[i // 2] = (nibbles[i] << 4) | nibbles[i + 1]
    return bytes(out)


def common_prefix_len(a: bytes, b: bytes) -> int:
    n = min(len(a), len(b))
    for i in range(n):
        if a[i] != b[i]:
            return i
    return n


def encode_path(nibbles: bytes) -> bytes:
    """Length-prefixed packed encoding; pad nibble of odd paths is zero."""
    n = len(nibbles)
    packed = bytearray((n + 1) // 2)
    for i, v in enumerate(nibbles):
        if v > 15:
            raise ValueError("nibble out of range")
        if i % 2 == 0:
            packed[i // 2] = v << 4
        else:
            packed[i // 2] |= v
    return _encode_varint(n) + bytes(packed)


def decode_path(data: bytes, offset: int) -> tuple[bytes, int]:
    """Decode a path at ``offset``; returns (nibbles, next offset)."""
    n, offset = _decode_varint(data, offset)
    packed_len = (n + 1) // 2
    if offset + packed_len > len(data):
        raise MalformedEncoding("truncated path")
    packed = data[offset : offset + packed_len]
    out = bytearray(n)
    for i in range(n):
        b = packed[i // 2]
        out[i] = (b >> 4) if i % 2 == 0 else (b & 0x0F)
    if n % 2 and packed and (packed[-1] & 0x0F):
        raise MalformedEncoding("nonzero pad nibble")
    return bytes(out), offset + packed_len


def _encode_varint(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _decode_varint(data: bytes, offset: int) -> tuple[int, int]:
    shift = 0
    value = 0
    while True:
        if offset >= len(data):
            raise MalformedEncoding("truncated varint")
        b = data[offset]
        offset += 1
        value |= (b & 0x7F) << shift
        if not b & 0x80:
            if b == 0 and shift:
                raise MalformedEncoding("non-canonical varint")
            return value, offset
        shift += 7


encode_varint = _encode_varint
decode_varint = _decode_varint
