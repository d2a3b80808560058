"""
Minibatch sampling and prefetching
"""

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass
class DomainBatch:
    """Dense features with their domain labels"""
    x: np.ndarray
    domains: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class LabeledBatch:
    """Dense features from one domain with class labels"""
    domain: int
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]


class IndexSampler:
    """Endless shuffled passes over a fixed index set"""

    def __init__(self, indices: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.indices = np.asarray(indices, dtype=np.int64)
        if self.indices.size == 0:
            raise ValueError("Cannot sample minibatches from an empty index set")
        self.batch_size = batch_size
        self.rng = rng
        self._order = self.rng.permutation(self.indices)
        self._cursor = 0

    def next(self) -> np.ndarray:
        out = []
        needed = self.batch_size
        while needed > 0:
            if self._cursor >= self._order.size:
                self._order = self.rng.permutation(self.indices)
                self._cursor = 0
            take = self._order[self._cursor:self._cursor + needed]
            self._cursor += take.size
            needed -= take.size
            out.append(take)
        return np.concatenate(out)


_DONE = object()


class _Failure:
    def __init__(self, error: BaseException):
        self.error = error


class Prefetcher(Iterable[T]):
    """
    Runs a producer iterator on a worker thread behind a bounded queue.
    Items come out in production order. depth == 0 iterates inline.
    """

    def __init__(self, producer: Iterator[T], depth: int):
        self.producer = producer
        self.depth = depth
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._queue: Optional[queue.Queue] = None

    def _run(self):
        try:
            for item in self.producer:
                while not self._stop.is_set():
                    try:
                        self._queue.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if self._stop.is_set():
                    return
            self._queue.put(_DONE)
        except BaseException as error:  # handed to the consumer
            self._queue.put(_Failure(error))

    def __iter__(self) -> Iterator[T]:
        if self.depth == 0:
            yield from self.producer
            return

        self._queue = queue.Queue(maxsize=self.depth)
        self._thread = threading.Thread(target=self._run, name="batch-prefetch", daemon=True)
        self._thread.start()
        try:
            while True:
                item = self._queue.get()
                if item is _DONE:
                    return
                if isinstance(item, _Failure):
                    raise item.error
                yield item
        finally:
            self.close()

    def close(self):
        self._stop.set()
        if self._thread is not None:
            # unblock a producer waiting on a full queue
            while self._thread.is_alive():
                try:
                    self._queue.get_nowait()
                except queue.Empty:
                    pass
                self._thread.join(timeout=0.05)
            self._thread = None
