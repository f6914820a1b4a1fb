"""Counter-based random streams for reproducible, scheduler-independent Monte Carlo.

Streams are keyed by (seed, stream id) and partitioned into fixed-size chunks.
Chunk c of a stream uses ``Philox(key).jumped(c)``, so the draws consumed by a
chunk never depend on how chunks are distributed over workers.  All reductions
over chunks happen in chunk-index order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Fixed chunk size: part of the determinism contract, do not derive from
# machine parallelism.
CHUNK = 8192

_MASK64 = (1 << 64) - 1


def philox_stream(seed: int, stream_id: int, chunk_index: int = 0) -> np.random.Generator:
    """Generator for one chunk of the (seed, stream_id) stream."""
    key = ((int(seed) & _MASK64) << 64) | (int(stream_id) & _MASK64)
    bg = np.random.Philox(key=key)
    if chunk_index:
        bg = bg.jumped(int(chunk_index))
    return np.random.Generator(bg)


def chunk_sizes(n: int, chunk: int = CHUNK) -> list[int]:
    """Split n replications into fixed-size chunks (last one ragged)."""
    if n <= 0:
        return []
    full, rem = divmod(n, chunk)
    sizes = [chunk] * full
    if rem:
        sizes.append(rem)
    return sizes


def run_chunks(n: int, worker, threads: int | None = None, chunk: int = CHUNK) -> list:
    """Evaluate ``worker(chunk_index, size)`` over all chunks of n replications.

    Results are returned in chunk-index order regardless of thread count, so a
    deterministic reduction by the caller is deterministic overall.
    """
    sizes = chunk_sizes(n, chunk)
    if threads is None or threads <= 1 or len(sizes) <= 1:
        return [worker(ci, m) for ci, m in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, ci, m) for ci, m in enumerate(sizes)]
        return [f.result() for f in futures]
