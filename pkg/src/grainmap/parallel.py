"""Ordered task mapping over an optional thread pool.

Results are always gathered in task order, so outputs are identical for any
worker count; only scheduling differs.  Static mode pre-binds task t to
worker t mod W and each worker walks its strided slice sequentially; dynamic
mode feeds a shared queue.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence


def chunk_ranges(n: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, n)) for s in range(0, max(n, 0), size)]


def map_ordered(fn: Callable, tasks: Sequence, executor: ThreadPoolExecutor | None,
                workers: int, dynamic: bool = False) -> list:
    if executor is None or workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    results = [None] * len(tasks)
    if dynamic:
        futures = {executor.submit(fn, t): i for i, t in enumerate(tasks)}
        for fut, i in futures.items():
            results[i] = fut.result()
        return results

    def run_slice(w: int) -> None:
        for i in range(w, len(tasks), workers):
            results[i] = fn(tasks[i])

    list(executor.map(run_slice, range(min(workers, len(tasks)))))
    return results
