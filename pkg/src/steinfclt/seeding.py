"""Deterministic seed derivation and chunked, thread-count-independent replication.

Replications are grouped into fixed-size chunks.  Chunk ``c`` of stream ``s``
under master seed ``M`` always draws from ``SeedSequence([M, s, c])``, so the
concatenated output depends only on ``(M, s, R, chunk)`` and never on how many
worker threads processed the chunks.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

DEFAULT_CHUNK = 1000


def stable_key(label: str) -> int:
    """32-bit stable hash of a label (independent of PYTHONHASHSEED)."""
    return zlib.crc32(label.encode("utf-8"))


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Generator seeded by the entropy tuple ``(master_seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


def chunk_sizes(R: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    if R < 0:
        raise ValueError("replication count must be nonnegative")
    full, rest = divmod(R, chunk)
    return [chunk] * full + ([rest] if rest else [])


def replicate(
    draw: Callable[[np.random.Generator, int], np.ndarray],
    R: int,
    master_seed: int,
    stream: int = 0,
    *,
    threads: int = 1,
    chunk: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """Call ``draw(rng, size)`` over fixed chunks and concatenate in chunk order."""
    sizes = chunk_sizes(R, chunk)

    def work(c: int) -> np.ndarray:
        return draw(derive_rng(master_seed, stream, c), sizes[c])

    if threads <= 1 or len(sizes) <= 1:
        parts = [work(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, range(len(sizes))))
    return np.concatenate(parts, axis=0)
