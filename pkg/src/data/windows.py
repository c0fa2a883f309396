"""Chronological splits, sliding windows, batching and a prefetching loader."""

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, Optional, Tuple

import numpy as np

from src.core.errors import ConfigError
from src.model.embeddings import time_indices

logger = logging.getLogger(__name__)

Range = Tuple[int, int]
SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class SplitRanges:
    """Contiguous half-open step ranges of the three splits."""

    train: Range
    val: Range
    test: Range

    def get(self, name: str) -> Range:
        if name not in SPLIT_NAMES:
            raise ConfigError(f"unknown split {name!r}; expected one of {SPLIT_NAMES}")
        return getattr(self, name)

    def as_dict(self) -> Dict[str, Range]:
        return {name: getattr(self, name) for name in SPLIT_NAMES}


def split_chronological(n_steps: int) -> SplitRanges:
    """70 / 10 / 20 split of ``n_steps`` in time order; the test split takes the remainder."""
    if n_steps < 10:
        raise ConfigError(f"series of {n_steps} steps is too short to split (needs >= 10)")
    n_train = n_steps * 7 // 10
    n_val = n_steps // 10
    return SplitRanges(
        train=(0, n_train),
        val=(n_train, n_train + n_val),
        test=(n_train + n_val, n_steps),
    )


@dataclass(frozen=True)
class WindowBatch:
    """History/target pairs in normalized units; arrays are read-only."""

    x: np.ndarray
    y: np.ndarray
    tod_idx: np.ndarray
    dow_idx: np.ndarray
    starts: np.ndarray

    def __post_init__(self):
        for array in (self.x, self.y, self.tod_idx, self.dow_idx, self.starts):
            array.setflags(write=False)

    def __len__(self) -> int:
        return self.x.shape[0]


class WindowSet:
    """
    Every stride-1 window of one split, materialized lazily per batch.

    Window ``k`` takes history ``[start + k, start + k + t_in)`` and the target
    steps immediately after it.
    """

    def __init__(
        self,
        data: np.ndarray,
        data_range: Range,
        t_in: int = 12,
        t_out: int = 12,
        start_slot: int = 0,
        start_dow: int = 0,
        slots: int = 288,
    ):
        start, stop = data_range
        span = t_in + t_out
        if stop - start < span:
            raise ConfigError(f"range {data_range} holds {stop - start} steps, a window needs {span}")
        self.data = data
        self.t_in = t_in
        self.t_out = t_out
        self.starts = np.arange(start, stop - span + 1, dtype=np.int64)
        self.tod_all, self.dow_all = time_indices(start_slot, start_dow, data.shape[0], slots=slots)

    def __len__(self) -> int:
        return int(self.starts.size)

    def batch(self, positions: np.ndarray) -> WindowBatch:
        """Materialize the windows at ``positions`` (indices into this set)."""
        starts = self.starts[np.asarray(positions, dtype=np.int64)]
        history = starts[:, None] + np.arange(self.t_in)
        target = starts[:, None] + self.t_in + np.arange(self.t_out)
        return WindowBatch(
            x=self.data[history],
            y=self.data[target],
            tod_idx=self.tod_all[history],
            dow_idx=self.dow_all[history],
            starts=starts.copy(),
        )

    def iter_batches(
        self,
        batch_size: int = 64,
        shuffle: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Iterator[WindowBatch]:
        """
        Yield batches in window order, or in a seeded random order when ``shuffle`` is set.

        The last partial batch is kept.
        """
        if batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
        order = np.arange(len(self))
        if shuffle:
            if rng is None:
                raise ConfigError("shuffled batching needs a seeded generator")
            order = rng.permutation(order)
        for first in range(0, len(order), batch_size):
            yield self.batch(order[first:first + batch_size])


def make_windows(
    data: np.ndarray,
    data_range: Range,
    t_in: int = 12,
    t_out: int = 12,
    start_slot: int = 0,
    start_dow: int = 0,
    slots: int = 288,
) -> WindowSet:
    """Windows of ``data[start:stop]`` that never cross the range boundary."""
    windows = WindowSet(data, data_range, t_in, t_out, start_slot, start_dow, slots)
    logger.debug(f"Built {len(windows)} windows over range {data_range}")
    return windows


class _Failure:
    def __init__(self, exc: BaseException):
        self.exc = exc


class BackgroundLoader:
    """
    Iterate ``batches`` on a loader thread through a bounded queue.

    ``prefetch`` is the queue capacity; 0 iterates on the calling thread.
    """

    _DONE = object()

    def __init__(self, batches: Iterable[WindowBatch], prefetch: int = 2):
        if prefetch < 0:
            raise ConfigError(f"prefetch must be >= 0, got {prefetch}")
        self.batches = batches
        self.prefetch = prefetch

    def __iter__(self) -> Iterator[WindowBatch]:
        if self.prefetch == 0:
            yield from self.batches
            return

        slots: "queue.Queue" = queue.Queue(maxsize=self.prefetch)
        stop = threading.Event()

        def put(item) -> bool:
            while not stop.is_set():
                try:
                    slots.put(item, timeout=0.1)
                    return True
                except queue.Full:
                    continue
            return False

        def work() -> None:
            try:
                for item in self.batches:
                    if not put(item):
                        return
                put(self._DONE)
            except Exception as exc:
                put(_Failure(exc))

        thread = threading.Thread(target=work, name="window-loader", daemon=True)
        thread.start()
        try:
            while True:
                item = slots.get()
                if item is self._DONE:
                    break
                if isinstance(item, _Failure):
                    raise item.exc
                yield item
        finally:
            stop.set()
            thread.join()
