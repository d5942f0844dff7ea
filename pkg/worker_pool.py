"""
Thread pool orchestration for index-keyed work (samples, N values, p values).

Work items are identified by their index only; results are merged back by index,
so outcomes never depend on the number of threads or on scheduling order.
"""
import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _chunks(n_items: int, chunk_size: int) -> List[range]:
    return [range(lo, min(lo + chunk_size, n_items)) for lo in range(0, n_items, chunk_size)]


async def run_indexed_async(
    fn: Callable[[int], R],
    n_items: int,
    threads: int = 1,
    chunk_size: Optional[int] = None,
) -> List[R]:
    """Evaluate fn(0..n_items-1) on a pool of `threads` workers; results in index order"""
    if n_items <= 0:
        return []
    threads = max(1, int(threads))
    if chunk_size is None:
        chunk_size = max(1, -(-n_items // (threads * 4)))
    chunks = _chunks(n_items, chunk_size)
    semaphore = asyncio.Semaphore(threads)
    results: List[Optional[R]] = [None] * n_items
    loop = asyncio.get_running_loop()

    def run_chunk(indices: range) -> List[R]:
        return [fn(i) for i in indices]

    with ThreadPoolExecutor(max_workers=threads) as executor:

        async def submit(indices: range) -> None:
            async with semaphore:
                values = await loop.run_in_executor(executor, run_chunk, indices)
            for i, value in zip(indices, values):
                results[i] = value

        await asyncio.gather(*(submit(indices) for indices in chunks))

    logger.debug(f"Completed {n_items} work item(s) in {len(chunks)} chunk(s) on {threads} thread(s)")
    return results


def run_indexed(
    fn: Callable[[int], R],
    n_items: int,
    threads: Optional[int] = None,
    chunk_size: Optional[int] = None,
) -> List[R]:
    """Synchronous entry point; single-threaded work skips the event loop entirely"""
    threads = settings.threads if threads is None else threads
    if threads <= 1 or n_items <= 1:
        return [fn(i) for i in range(n_items)]
    return asyncio.run(run_indexed_async(fn, n_items, threads, chunk_size))


def map_items(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> List[R]:
    """run_indexed over a sequence, one item per work index"""
    items = list(items)
    return run_indexed(lambda i: fn(items[i]), len(items), threads, chunk_size=1)
