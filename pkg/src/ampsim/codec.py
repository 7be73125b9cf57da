"""Canonical binary encoding primitives.

Every value that gets hashed, signed, or measured for size goes through
these helpers: length-prefixed, field-ordered, big-endian integers, no
floating point. Identical values encode to identical bytes on every
platform, and distinct values encode to distinct bytes (each composite
carries a leading tag byte).
"""

from __future__ import annotations

import hashlib

DIGEST_SIZE = 32
HASH_NAME = "sha256"

U32_MAX = 2**32 - 1
U64_MAX = 2**64 - 1


class DecodeError(ValueError):
    """Raised when a byte string is not a well-formed canonical encoding."""


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def encode_u8(x: int) -> bytes:
    if not 0 <= x <= 0xFF:
        raise ValueError(f"u8 out of range: {x}")
    return x.to_bytes(1, "big")


def encode_u64(x: int) -> bytes:
    if not 0 <= x <= U64_MAX:
        raise ValueError(f"u64 out of range: {x}")
    return x.to_bytes(8, "big")


def encode_blob(b: bytes) -> bytes:
    if len(b) > U32_MAX:
        raise ValueError("blob too long")
    return len(b).to_bytes(4, "big") + b


def encode_digest(d: bytes) -> bytes:
    if len(d) != DIGEST_SIZE:
        raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(d)}")
    return d


class Reader:
    """Sequential reader over a canonical encoding."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated encoding")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u64(self) -> int:
        return int.from_bytes(self._take(8), "big")

    def blob(self) -> bytes:
        n = int.from_bytes(self._take(4), "big")
        return self._take(n)

    def digest(self) -> bytes:
        return self._take(DIGEST_SIZE)

    def expect_eof(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")
