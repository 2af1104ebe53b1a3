"""Deterministic random-stream derivation.

One master seed fans out into independent substreams keyed by stable
identifiers (purpose strings, image ids, repetition indices).  String keys
are hashed with SHA-256 rather than the process-salted builtin ``hash`` so
the same key yields the same stream in every interpreter run.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "key_words"]

_MASK64 = (1 << 64) - 1


def key_words(key) -> tuple:
    """Map a seed key to a tuple of unsigned 64-bit words.

    Integers pass through (masked to 64 bits); strings and bytes are hashed
    with SHA-256 and split into four words.  Nested tuples/lists flatten.
    """
    if isinstance(key, (bool,)):
        return (int(key),)
    if isinstance(key, (int, np.integer)):
        return (int(key) & _MASK64,)
    if isinstance(key, str):
        key = key.encode("utf-8")
    if isinstance(key, (bytes, bytearray)):
        digest = hashlib.sha256(bytes(key)).digest()
        return tuple(
            int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)
        )
    if isinstance(key, (tuple, list)):
        words = []
        for part in key:
            words.extend(key_words(part))
        return tuple(words)
    raise TypeError(f"cannot derive stream key from {type(key).__name__}")


def substream(seed: int, *keys) -> np.random.Generator:
    """Child generator for (seed, keys...), independent across distinct keys."""
    entropy = [int(seed) & _MASK64]
    for key in keys:
        entropy.extend(key_words(key))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
