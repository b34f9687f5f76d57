"""Deterministic random generation for shares and masks.

Every random matrix in the protocols comes from a CounterDrbg: a SHA-256
counter generator keyed by a seed plus a derivation path. Runs are
reproducible from the seeds recorded in the run manifest, which is what the
transport-equivalence and oracle-equivalence tests rely on. For an actual
deployment the per-party seeds would come from OS entropy instead; the
generator itself is unchanged.
"""

from __future__ import annotations

import hashlib


def _seed_bytes(seed: int | str | bytes) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        # Fixed-width so 1 and "1" cannot collide with each other.
        return b"i" + seed.to_bytes(16, "little", signed=True)
    if isinstance(seed, str):
        return b"s" + seed.encode("utf-8")
    raise TypeError(f"unsupported seed type: {type(seed).__name__}")


class CounterDrbg:
    """SHA-256 in counter mode: block i = H(key || i), 4 u64 words per block."""

    __slots__ = ("_key", "_counter", "_buf", "_pos")

    def __init__(self, seed: int | str | bytes, label: str = ""):
        h = hashlib.sha256()
        h.update(b"secregress.drbg.v1\x00")
        h.update(_seed_bytes(seed))
        h.update(b"\x00")
        h.update(label.encode("utf-8"))
        self._key = h.digest()
        self._counter = 0
        self._buf = b""
        self._pos = 0

    def child(self, label: str, *indices: int) -> "CounterDrbg":
        """Derive an independent generator for a named subcontext.

        Children are stable: the same (label, indices) path always yields the
        same stream, regardless of how much the parent has been consumed.
        """
        h = hashlib.sha256()
        h.update(b"secregress.child.v1\x00")
        h.update(self._key)
        h.update(label.encode("utf-8"))
        for ix in indices:
            h.update(ix.to_bytes(8, "little", signed=True))
        out = object.__new__(CounterDrbg)
        out._key = h.digest()
        out._counter = 0
        out._buf = b""
        out._pos = 0
        return out

    def _refill(self) -> None:
        h = hashlib.sha256()
        h.update(self._key)
        h.update(self._counter.to_bytes(8, "big"))
        self._buf = h.digest()
        self._pos = 0
        self._counter += 1

    def u64(self) -> int:
        if self._pos >= 32:
            self._refill()
        elif not self._buf:
            self._refill()
        word = int.from_bytes(self._buf[self._pos:self._pos + 8], "little")
        self._pos += 8
        return word

    def u64_list(self, n: int) -> list[int]:
        out = []
        append = out.append
        buf = self._buf
        pos = self._pos
        key = self._key
        counter = self._counter
        while len(out) < n:
            if pos >= 32 or not buf:
                buf = hashlib.sha256(key + counter.to_bytes(8, "big")).digest()
                counter += 1
                pos = 0
            append(int.from_bytes(buf[pos:pos + 8], "little"))
            pos += 8
        self._buf = buf
        self._pos = pos
        self._counter = counter
        return out

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        # Largest multiple of n below 2^64; rejects < 50% of draws.
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            w = self.u64()
            if w < limit:
                return w % n

    def sample(self, m: int, k: int) -> list[int]:
        """k distinct indices from range(m), order of selection preserved."""
        if k > m:
            raise ValueError("sample size exceeds population")
        # Partial Fisher-Yates over a sparse map keeps this O(k).
        swapped: dict[int, int] = {}
        out = []
        for i in range(k):
            j = i + self.randrange(m - i)
            out.append(swapped.get(j, j))
            swapped[j] = swapped.get(i, i)
        return out

    def shuffle(self, items: list) -> list:
        """Fisher-Yates permuted copy; the input is left untouched."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.randrange(i + 1)
            out[i], out[j] = out[j], out[i]
        return out
