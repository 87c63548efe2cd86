"""Order-preserving process pool map."""
from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor

THREADS_ENV = "SPATIALSPEC_THREADS"


def default_threads() -> int:
    """Worker cap from the environment, else the number of usable cores."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def parallel_map(func, items, threads: int | None = 1) -> list:
    """``[func(i) for i in items]``, optionally over ``threads`` processes.

    Results always come back in input order, so anything computed from them
    is independent of the worker count.
    """
    items = list(items)
    threads = default_threads() if threads is None else int(threads)
    if threads <= 1 or len(items) <= 1:
        return [func(i) for i in items]
    ctx = multiprocessing.get_context("fork") if hasattr(os, "fork") else None
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=min(threads, len(items)), mp_context=ctx) as pool:
        return list(pool.map(func, items, chunksize=chunk))
