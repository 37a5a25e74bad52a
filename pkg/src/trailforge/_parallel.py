"""Worker-count plumbing shared by the numba kernels and frame-level pools."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import numba


def resolve_workers(n_jobs) -> int:
    """Map ``None``/``"auto"``/``-1``/int to a positive worker count."""
    if n_jobs in (None, "auto", -1):
        return os.cpu_count() or 1
    n = int(n_jobs)
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n_jobs!r}")
    return n


@contextmanager
def worker_threads(n_jobs):
    """Temporarily set the numba thread count.

    numba cannot exceed the pool size fixed at import, so larger requests are
    clamped.  Kernels are written so results never depend on this number.
    """
    n = min(resolve_workers(n_jobs), numba.config.NUMBA_NUM_THREADS)
    previous = numba.get_num_threads()
    numba.set_num_threads(n)
    try:
        yield n
    finally:
        numba.set_num_threads(previous)


def map_ordered(fn, items, n_jobs):
    """``map`` over a thread pool, preserving input order."""
    n = resolve_workers(n_jobs)
    items = list(items)
    if n == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
