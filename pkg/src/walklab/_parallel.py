"""Deterministic chunked parallelism and splittable RNG streams.

Work is partitioned into fixed-size chunks whose boundaries and RNG streams
depend only on the master seed and chunk index, never on thread count.
Results are combined in chunk order, so any thread count produces identical
output.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 1 << 16


def thread_count(requested: int | None = None) -> int:
    if requested is not None and requested >= 1:
        return int(requested)
    env = os.environ.get("WALKLAB_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent counter-based (Philox) streams derived from one seed."""
    seqs = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(s)) for s in seqs]


def master_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def chunk_sizes(total: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def run_chunks(fn, n_chunks: int, threads: int | None = None) -> list:
    """Evaluate fn(i) for i in range(n_chunks); results in chunk order."""
    threads = thread_count(threads)
    if threads <= 1 or n_chunks <= 1:
        return [fn(i) for i in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_chunks)))
