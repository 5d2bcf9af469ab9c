"""Reproducible parallel Monte Carlo.

Work is cut into fixed-size chunks whose layout depends only on the sample
count, never on the number of workers. Chunk ``i`` draws from its own stream
``SeedSequence(seed, spawn_key=(i,))``, and results come back in chunk order,
so the output is identical for any worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK_SIZE = 8192


def default_workers() -> int:
    env = os.environ.get("GWIMOMENTS_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def stream(seed: int, index: int, *tags: int) -> np.random.Generator:
    """Independent generator for task ``index`` derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(*tags, int(index))))


def chunk_sizes(n: int, chunk: int = CHUNK_SIZE) -> list:
    full, rest = divmod(int(n), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn, n: int, seed: int, workers: int | None = None, tag: int = 0, chunk: int = CHUNK_SIZE) -> list:
    """Run ``fn(rng, size)`` over the chunks of ``n`` samples; results in chunk order."""
    sizes = chunk_sizes(n, chunk)
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = [(stream(seed, i, tag), s) for i, s in enumerate(sizes)]
    if workers == 1 or len(tasks) <= 1:
        return [fn(rng, s) for rng, s in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


class MomentAccumulator:
    """Mergeable (count, mean, M2) accumulator; merge uses Chan's pairwise update."""

    def __init__(self, shape=()):
        self.count = 0
        self.mean_ = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add(self, values: np.ndarray):
        """Fold in ``values`` whose leading axis indexes samples."""
        values = np.asarray(values, dtype=float)
        other = MomentAccumulator(values.shape[1:])
        if values.shape[0]:
            other.count = values.shape[0]
            other.mean_ = values.mean(axis=0)
            other.m2 = ((values - other.mean_) ** 2).sum(axis=0)
        return self.merge(other)

    def merge(self, other: "MomentAccumulator"):
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean_ - self.mean_
        self.mean_ = self.mean_ + delta * (other.count / n)
        self.m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        self.count = n
        return self

    def mean(self):
        return self.mean_

    def variance(self):
        if self.count < 2:
            return np.zeros_like(self.mean_)
        return self.m2 / (self.count - 1)

    def stderr(self):
        if self.count < 2:
            return np.zeros_like(self.mean_)
        return np.sqrt(self.variance() / self.count)
