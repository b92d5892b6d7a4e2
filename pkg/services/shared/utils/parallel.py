"""
Ordered parallel map used by the numerical sweeps.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    fn: Callable[[T], R], items: Iterable[T], max_workers: int = 1
) -> List[R]:
    """
    Apply fn to every item, possibly on a thread pool.

    Args:
        fn: Pure function to apply
        items: Inputs, consumed once
        max_workers: Thread cap; values <= 1 run inline

    Returns:
        Results in input order, independent of completion order
    """
    work = list(items)
    if max_workers <= 1 or len(work) <= 1:
        return [fn(item) for item in work]

    workers = min(max_workers, len(work))
    logger.debug(f"Mapping {len(work)} items over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, work))
