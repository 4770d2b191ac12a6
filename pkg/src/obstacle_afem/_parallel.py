"""Chunked element loops with an order-independent reduction.

Work is split into fixed-size chunks whose boundaries do not depend on the
number of workers, and results are always returned in chunk order.  The
output of :func:`map_chunks` is therefore bitwise identical for any value of
``OBSTACLE_AFEM_THREADS``.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 8192
ENV_VAR = "OBSTACLE_AFEM_THREADS"


def worker_count():
    """Number of worker threads requested through the environment (0 = auto)."""
    raw = os.environ.get(ENV_VAR, "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{ENV_VAR} must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ValueError(f"{ENV_VAR} must be >= 0, got {n}")
    if n == 0:
        n = os.cpu_count() or 1
    return n


def chunk_slices(n, chunk=None):
    chunk = CHUNK if chunk is None else chunk
    return [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def map_chunks(func, n, chunk=None):
    """Apply ``func(slice)`` over ``range(n)`` in fixed chunks.

    Returns the list of per-chunk results in chunk order.
    """
    slices = chunk_slices(n, chunk)
    workers = min(worker_count(), max(len(slices), 1))
    if workers <= 1 or len(slices) <= 1:
        return [func(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, slices))


def concat_chunks(func, n, chunk=None):
    """Like :func:`map_chunks` but concatenates array results along axis 0."""
    parts = map_chunks(func, n, chunk)
    if not parts:
        return func(slice(0, 0))
    return np.concatenate(parts, axis=0)
