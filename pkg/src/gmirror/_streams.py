"""Named random streams and an order-preserving parallel map.

Every random draw in the package comes from ``stream(seed, *keys)``.  The
stream depends only on the master seed and the integer key path, never on
which worker thread consumes it, so results are identical for any thread
count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "GMIRROR_THREADS"

# Key-path tags.  Integers, so SeedSequence can hash them directly.
MIRROR = 1
REDRAW = 2
CV_FOLDS = 3
BOOTSTRAP = 4
DESIGN = 5
TRUTH = 6
NOISE = 7
METHOD = 8
SPLIT = 9
REPLICATE = 10


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the key path ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed for a child computation."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def resolve_threads(threads: int | str | None = None) -> int:
    if threads is None or threads == "auto":
        env = os.environ.get(THREADS_ENV)
        if env and env != "auto":
            return max(1, int(env))
        return max(1, os.cpu_count() or 1)
    return max(1, int(threads))


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | str | None = None) -> list[R]:
    """``[fn(x) for x in items]`` evaluated on a thread pool, gathered in order."""
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
