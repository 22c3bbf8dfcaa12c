"""Seeded random streams and replicate-parallel execution.

Every replicate gets its own generator derived from ``(master_seed, index)``
so results never depend on scheduling or on the number of workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np


def substream(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for replicate ``index`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class UniformBuffer:
    """Draws uniforms from ``rng`` in blocks and hands them out one by one.

    Scalar calls into a numpy generator are slow; block draws keep the
    inner simulation loops cheap while staying fully deterministic.
    """

    __slots__ = ("_rng", "_block", "_max", "_buf", "_pos")

    def __init__(self, rng: np.random.Generator, block: int = 8192, first: int = 64):
        self._rng = rng
        self._max = block
        self._block = min(first, block)
        self._buf: list[float] = []
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == len(self._buf):
            # blocks grow geometrically so short runs stay cheap
            self._buf = self._rng.random(self._block).tolist()
            self._block = min(2 * self._block, self._max)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def resolve_workers(threads) -> int:
    if threads in (None, "auto"):
        return os.cpu_count() or 1
    n = int(threads)
    if n < 1:
        raise ValueError("threads must be >= 1 or 'auto'")
    return n


def parallel_map(fn: Callable, items: Sequence | Iterable, threads=1) -> list:
    """``[fn(item) for item in items]``, optionally across worker processes.

    Output order always follows ``items``. ``fn`` must be picklable when
    more than one worker is used.
    """
    items = list(items)
    workers = min(resolve_workers(threads), max(len(items), 1))
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
