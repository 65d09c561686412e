"""Reproducible random streams for parallel Monte Carlo.

Every random quantity in the library is drawn from a counter-based
generator (Philox) keyed by (experiment seed, stream id, block index)
through numpy's splittable SeedSequence. Work is split into fixed-size
chunks of paths; chunk i always draws from the stream keyed by i and
partial results are reduced in chunk order. Outputs therefore depend
only on (seed, chunk size), never on thread scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

# Stream ids keep independent random sources from colliding under one
# experiment seed.
STREAM_PATHS = 0
STREAM_THRESHOLD = 1      # unit-exponential default triggers
STREAM_REFERENCE = 2      # fine-grid continuous reference paths
STREAM_NODES = 3          # random node sampling in identity checks

DEFAULT_CHUNK = 1 << 17


def seed_sequence(seed: int, stream: int = STREAM_PATHS, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))


def generator(seed: int, stream: int = STREAM_PATHS, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, stream, index)))


def derive_seed(seed: int, stream: int = STREAM_PATHS, index: int = 0) -> int:
    """One 64-bit seed per (seed, stream, index), for handing to sub-tasks."""
    return int(seed_sequence(seed, stream, index).generate_state(1, np.uint64)[0])


def chunk_ranges(total: int, chunk_size: int) -> list[tuple[int, int, int]]:
    """Split [0, total) into (index, start, stop) chunks of chunk_size."""
    if total <= 0:
        raise ValueError("need a positive number of paths")
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    out = []
    start = 0
    idx = 0
    while start < total:
        stop = min(start + chunk_size, total)
        out.append((idx, start, stop))
        start = stop
        idx += 1
    return out


def map_chunks(fn: Callable, total: int, chunk_size: int = DEFAULT_CHUNK,
               threads: int = 1) -> list:
    """Apply fn(chunk_index, chunk_paths) over all chunks; results come back
    ordered by chunk index regardless of thread count."""
    chunks = chunk_ranges(total, chunk_size)
    if threads <= 1 or len(chunks) == 1:
        return [fn(idx, stop - start) for idx, start, stop in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, idx, stop - start) for idx, start, stop in chunks]
        return [f.result() for f in futures]


class MeanAccumulator:
    """Chunk-ordered accumulation of sample mean and standard error.

    Sums are combined in chunk order so the reduction is bitwise
    reproducible for a given (seed, chunk size).
    """

    def __init__(self):
        self._sums = []
        self._sumsqs = []
        self._counts = []

    def add(self, values: np.ndarray):
        v = np.asarray(values, dtype=float)
        self._sums.append(v.sum())
        self._sumsqs.append((v * v).sum())
        self._counts.append(v.size)

    def add_moments(self, total: float, total_sq: float, count: int):
        self._sums.append(float(total))
        self._sumsqs.append(float(total_sq))
        self._counts.append(int(count))

    @property
    def count(self) -> int:
        return int(sum(self._counts))

    def mean(self) -> float:
        return float(sum(self._sums) / self.count)

    def std_error(self) -> float:
        n = self.count
        if n < 2:
            return 0.0
        m = self.mean()
        var = (sum(self._sumsqs) - n * m * m) / (n - 1)
        return float(np.sqrt(max(var, 0.0) / n))
