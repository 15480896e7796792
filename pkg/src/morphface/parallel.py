"""Thread-count control used by the embarrassingly parallel stages.

Work items are always independent and results are reduced in index order,
so outputs are bit-identical for any thread count.
"""

from concurrent.futures import ThreadPoolExecutor

_num_threads = 1


def set_num_threads(n: int) -> None:
    global _num_threads
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _num_threads = int(n)


def get_num_threads() -> int:
    return _num_threads


def ordered_map(fn, items):
    """Map ``fn`` over ``items``, preserving order regardless of threading."""
    items = list(items)
    if _num_threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=_num_threads) as pool:
        return list(pool.map(fn, items))
