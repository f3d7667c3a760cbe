import logging
from collections.abc import Callable, Sequence
from typing import Any, Optional, TypeVar

import numpy as np
from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

R = TypeVar("R")


class ChunkPool:
    """
    Splits the rows of an array into contiguous chunks, maps a function over them in
    joblib workers and hands back the per-chunk results in row order.

    With one worker everything runs in the calling process. Use as a context
    manager so that the workers are reused across calls and shut down at the end.
    """

    __slots__ = ("workers", "_parallel")

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.workers = workers
        self._parallel: Optional[Parallel] = None

    def __enter__(self) -> "ChunkPool":
        if self.workers > 1:
            self._parallel = Parallel(n_jobs=self.workers, backend="loky")
            self._parallel.__enter__()
            logger.debug("started %d workers", self.workers)
        return self

    def __exit__(self, *exc_info: Any) -> None:
        if self._parallel is not None:
            self._parallel.__exit__(*exc_info)
            self._parallel = None

    def map_rows(
        self,
        fn: Callable[..., R],
        rows: np.ndarray,
        *args: Any,
    ) -> Sequence[R]:
        """Returns [fn(chunk, *args) for each chunk of rows]."""
        if self._parallel is None or rows.shape[0] < 2 * self.workers:
            return [fn(rows, *args)]
        chunks = np.array_split(rows, self.workers)
        return list(self._parallel(delayed(fn)(chunk, *args) for chunk in chunks))


INLINE = ChunkPool(1)
