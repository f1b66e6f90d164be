from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from bubble_correction.config.settings import settings


def map_chunks(
    func: Callable[[np.ndarray], np.ndarray],
    points: np.ndarray,
    threads: Optional[int] = None,
    chunk_size: int = 4096,
) -> np.ndarray:
    """
    Evaluate ``func`` on row chunks of ``points`` and concatenate in order.

    Args:
        func: Vectorized function mapping an (m, n) array to an (m, ...) array
        points: Sample points, one per row
        threads: Worker cap, defaults to ``settings.THREADS``
        chunk_size: Rows per chunk

    Returns:
        np.ndarray: Results stacked in the original row order
    """
    if len(points) == 0:
        return func(points)
    workers = max(1, threads if threads is not None else settings.THREADS)
    chunks = [points[i : i + chunk_size] for i in range(0, len(points), chunk_size)]
    if workers == 1 or len(chunks) == 1:
        return np.concatenate([func(chunk) for chunk in chunks])
    with ThreadPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
        return np.concatenate(list(pool.map(func, chunks)))
