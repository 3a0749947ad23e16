"""Stable hashing shared by splits, fold assignment, digests, and log chains.

Everything here must be deterministic across processes and platforms, so
Python's salted ``hash()`` is never used.
"""

import hashlib


def stable_hash(*parts: object) -> int:
    """64-bit unsigned hash of the given parts, order-sensitive."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        data = part if isinstance(part, bytes) else str(part).encode("utf-8")
        h.update(data)
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def content_digest(data: bytes) -> str:
    """Hex digest used to pin immutable payloads (bucket files, log records)."""
    return hashlib.sha256(data).hexdigest()


def chain_digest(prev: str, data: bytes) -> str:
    """Link digest for append-only logs: each record seals the one before it."""
    h = hashlib.sha256()
    h.update(prev.encode("ascii"))
    h.update(data)
    return h.hexdigest()[:16]
