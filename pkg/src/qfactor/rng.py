"""Seed-derived random generator streams.

Every random quantity in the toolkit flows from a single user seed through
named substreams (``"dgp"``, ``"init"``, ``"contamination"``, ...), so runs
are reproducible bit-for-bit and independent of worker scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "derive_seed"]


def _key_words(parts: tuple[int | str, ...]) -> tuple[int, ...]:
    words: list[int] = []
    for part in parts:
        if isinstance(part, (int, np.integer)):
            if part < 0:
                raise ValueError("substream path entries must be non-negative")
            words.append(int(part) & 0xFFFFFFFF)
            words.append((int(part) >> 32) & 0xFFFFFFFF)
        elif isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf-8")))
        else:
            raise TypeError(f"unsupported substream key part: {part!r}")
    return tuple(words)


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Return the generator for the named substream of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key_words(path))
    return np.random.default_rng(ss)


def derive_seed(seed: int, *path: int | str) -> int:
    """Collapse ``(seed, *path)`` into a single non-negative 63-bit seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key_words(path))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
