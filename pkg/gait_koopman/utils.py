"""Concurrent execution utilities."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from logging import Logger, getLogger
from typing import Callable, Sequence, TypeVar

from tqdm import tqdm

logger: Logger = getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_parallel(
    func: Callable[[T], R],
    items: Sequence[T],
    max_workers: int = 4,
    desc: str = "Processing...",
    progress: bool = True,
) -> list[R]:
    """Apply a function to every item using a thread pool.

    Results are returned in input order regardless of completion order, so
    any reduction over them is deterministic.

    Args:
        func: Pure function to apply
        items: Items to process
        max_workers: Maximum number of threads
        desc: Progress bar label
        progress: Whether to display a progress bar

    Returns:
        List of results in the same order as items

    Raises:
        ValueError: If items is empty
    """
    if not items:
        raise ValueError("Items list cannot be empty")

    def run(idx: int, item: T) -> tuple[int, R]:
        return idx, func(item)

    results: list[R | None] = [None] * len(items)

    if max_workers <= 1:
        for idx, item in enumerate(tqdm(items, desc=desc, disable=not progress)):
            results[idx] = func(item)
        return results  # type: ignore[return-value]

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(run, idx, item) for idx, item in enumerate(items)]

        for future in tqdm(
            as_completed(futures),
            total=len(items),
            desc=desc,
            disable=not progress,
        ):
            try:
                idx, result = future.result()
            except Exception as e:
                logger.error(f"Parallel task failed: {e}")
                raise
            results[idx] = result

    return results  # type: ignore[return-value]
