"""Keccak-256 (legacy pad 0x01, as used for trie node and account identifiers).

A numba-jitted permutation is used when numba imports cleanly; otherwise a
pure-Python fallback keeps results identical (and slow).
"""

from __future__ import annotations

import numpy as np

_RATE = 136  # bytes, for 256-bit output

_RC = np.array(
    [
        0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
        0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
        0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
        0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
        0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
        0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
    ],
    dtype=np.uint64,
)

# rotation offsets indexed by 5*x + y
_ROT = np.array(
    [0, 36, 3, 41, 18, 1, 44, 10, 45, 2, 62, 6, 43, 15, 61, 28, 55, 25, 21, 56, 27, 20, 39, 8, 14],
    dtype=np.uint64,
)


def _keccak_f_py(a, rc):
    mask = (1 << 64) - 1
    for rnd in range(24):
        c = [a[x] ^ a[x + 5] ^ a[x + 10] ^ a[x + 15] ^ a[x + 20] for x in range(5)]
        d = [c[(x + 4) % 5] ^ (((c[(x + 1) % 5] << 1) | (c[(x + 1) % 5] >> 63)) & mask) for x in range(5)]
        for i in range(25):
            a[i] ^= d[i % 5]
        b = [0] * 25
        for x in range(5):
            for y in range(5):
                v = a[x + 5 * y]
                r = int(_ROT[5 * x + y])
                b[y + 5 * ((2 * x + 3 * y) % 5)] = ((v << r) | (v >> (64 - r))) & mask if r else v
        for y in range(0, 25, 5):
            t = b[y : y + 5]
            for x in range(5):
                a[y + x] = t[x] ^ ((~t[(x + 1) % 5] & mask) & t[(x + 2) % 5])
        a[0] ^= int(rc[rnd])


try:  # pragma: no cover - exercised indirectly
    from numba import njit

    @njit(cache=True)
    def _keccak_f_nb(a, rc):  # pragma: no cover - compiled
        one = np.uint64(1)
        s63 = np.uint64(63)
        s64 = np.uint64(64)
        zero = np.uint64(0)
        rot = _ROT
        b = np.empty(25, dtype=np.uint64)
        for rnd in range(24):
            c0 = a[0] ^ a[5] ^ a[10] ^ a[15] ^ a[20]
            c1 = a[1] ^ a[6] ^ a[11] ^ a[16] ^ a[21]
            c2 = a[2] ^ a[7] ^ a[12] ^ a[17] ^ a[22]
            c3 = a[3] ^ a[8] ^ a[13] ^ a[18] ^ a[23]
            c4 = a[4] ^ a[9] ^ a[14] ^ a[19] ^ a[24]
            d0 = c4 ^ ((c1 << one) | (c1 >> s63))
            d1 = c0 ^ ((c2 << one) | (c2 >> s63))
            d2 = c1 ^ ((c3 << one) | (c3 >> s63))
            d3 = c2 ^ ((c4 << one) | (c4 >> s63))
            d4 = c3 ^ ((c0 << one) | (c0 >> s63))
            for i in range(0, 25, 5):
                a[i] ^= d0
                a[i + 1] ^= d1
                a[i + 2] ^= d2
                a[i + 3] ^= d3
                a[i + 4] ^= d4
            for x in range(5):
                for y in range(5):
                    v = a[x + 5 * y]
                    r = rot[5 * x + y]
                    if r != zero:
                        v = (v << r) | (v >> (s64 - r))
                    b[y + 5 * ((2 * x + 3 * y) % 5)] = v
            for y in range(0, 25, 5):
                t0, t1, t2, t3, t4 = b[y], b[y + 1], b[y + 2], b[y + 3], b[y + 4]
                a[y] = t0 ^ ((~t1) & t2)
                a[y + 1] = t1 ^ ((~t2) & t3)
                a[y + 2] = t2 ^ ((~t3) & t4)
                a[y + 3] = t3 ^ ((~t4) & t0)
                a[y + 4] = t4 ^ ((~t0) & t1)
            a[0] ^= rc[rnd]

    _keccak_f = _keccak_f_nb
    _JITTED = True
except Exception:  # pragma: no cover
    _keccak_f = None
    _JITTED = False


def keccak256(data: bytes) -> bytes:
    """Return the 32-byte Keccak-256 digest of ``data``."""
    pad = (-len(data) - 1) % _RATE
    if pad == 0:
        padded = data + b"\x81"
    else:
        padded = data + b"\x01" + b"\x00" * (pad - 1) + b"\x80"
    if _JITTED:
        st = np.zeros(25, dtype=np.uint64)
        for off in range(0, len(padded), _RATE):
            st[:17] ^= np.frombuffer(padded, dtype=np.uint64, count=17, offset=off)
            _keccak_f(st, _RC)
        return st.tobytes()[:32]
    st = [0] * 25
    for off in range(0, len(padded), _RATE):
        words = np.frombuffer(padded, dtype=np.uint64, count=17, offset=off)
        for i in range(17):
            st[i] ^= int(words[i])
        _keccak_f_py(st, _RC)
    out = b"".join(int(w).to_bytes(8, "little") for w in st[:4])
    return out
