"""Order-independent 64-bit seed derivation.

Sub-seeds depend only on ``(parent seed, key)``, so records can be processed
in any order or in parallel and still receive the same randomness.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


def derive_seed(seed: int, key: str) -> int:
    """Mix a parent seed with a string key into a 64-bit sub-seed."""
    check_seed(seed)
    return splitmix64(seed ^ splitmix64(fnv1a64(key)))


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


def caption_hash(caption: str) -> str:
    """Stable identifier for a caption (first 16 hex digits of its SHA-256)."""
    return hashlib.sha256(caption.strip().encode("utf-8")).hexdigest()[:16]


def seeded_sample(items, n: int | None, seed: int, key=lambda item: item.id):
    """Reproducible random subset: rank by ``derive_seed(seed, key)`` and keep ``n``.

    The selection does not depend on input order. The result keeps the rank
    order, ties broken by key.
    """
    ranked = sorted(items, key=lambda it: (derive_seed(seed, key(it)), key(it)))
    return ranked if n is None else ranked[:n]
