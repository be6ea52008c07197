"""Worker-pool plumbing.

A process-wide worker cap (set from the CLI ``--threads`` flag) bounds the
thread pools used for independent work items such as sweep rows and
posterior samples.  Results are always combined in submission order, so
outputs do not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["set_max_workers", "get_max_workers", "ordered_map"]

_max_workers = None


def set_max_workers(n):
    global _max_workers
    if n is not None and int(n) < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    _max_workers = None if n is None else int(n)


def get_max_workers():
    return _max_workers if _max_workers is not None else (os.cpu_count() or 1)


def ordered_map(fn, items, workers=None):
    """Map ``fn`` over ``items``, yielding results in input order."""
    n = get_max_workers() if workers is None else max(int(workers), 1)
    if n == 1 or len(items) <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        yield from pool.map(fn, items)
