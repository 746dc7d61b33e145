import logging
import os
from concurrent.futures import ThreadPoolExecutor

# License: BSD 3 clause

logger = logging.getLogger(__name__)

THREADS_ENV = 'CRPSRFT_THREADS'


def n_threads(requested=None):
    """Number of worker threads, capped by the CRPSRFT_THREADS environment variable"""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            logger.warning(f'Ignoring {THREADS_ENV}={cap!r}, expected an integer.')
    return max(1, int(n))


def parallel_map(fun, items, threads=None):
    """``[fun(item) for item in items]``, evaluated on a thread pool

    Results are returned in the order of `items`. Each call must only depend on
    its own item (e.g. on a random stream keyed by the item index) for the result
    to be independent of the number of threads.
    """
    items = list(items)
    threads = min(n_threads(threads), max(len(items), 1))
    if threads == 1:
        return [fun(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fun, items))
