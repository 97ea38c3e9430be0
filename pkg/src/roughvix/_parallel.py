import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get("VVIX_THREADS", 1)
    return max(1, int(threads))


def ordered_map(fn, items, threads=None):
    """``list(map(fn, items))``, optionally on a thread pool; output order is fixed."""
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def chunks(n_items: int, size: int):
    size = max(1, int(size))
    return [(a, min(a + size, n_items)) for a in range(0, n_items, size)]
