"""Deterministic block-parallel random streams.

Sample index ``i`` belongs to block ``i // BLOCK``; block ``k`` always draws
from ``Generator(PCG64(SeedSequence(seed, spawn_key=(k,))))``.  Per-block
moments are merged in block order, so results do not depend on how blocks
are scheduled across workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

BLOCK = 1 << 16


def block_rng(seed: int, k: int, *tag: int) -> np.random.Generator:
    """Generator for block ``k``; extra ``tag`` integers namespace sub-streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(k, *tag))))


def block_sizes(n: int, block: int = BLOCK) -> list[int]:
    full, rest = divmod(int(n), block)
    return [block] * full + ([rest] if rest else [])


def _merge(parts: Sequence[tuple[int, float, float]]) -> tuple[int, float, float]:
    """Chan's pairwise update of (count, mean, M2), applied left to right."""
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        if nb == 0:
            continue
        tot = n + nb
        delta = mb - mean
        mean += delta * nb / tot
        m2 += m2b + delta * delta * n * nb / tot
        n = tot
    return n, mean, m2


def blocked_moments(draw: Callable[[np.random.Generator, int], np.ndarray], n: int, seed: int,
                    workers: int = 1, tag: tuple = ()) -> tuple[float, float]:
    """Mean and (ddof=0) variance of ``n`` values produced block by block.

    ``draw(rng, size)`` must return ``size`` per-sample values.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    sizes = block_sizes(n)

    def one(k):
        vals = np.asarray(draw(block_rng(seed, k, *tag), sizes[k]), dtype=float)
        mb = float(vals.mean())
        return sizes[k], mb, float(np.sum((vals - mb) ** 2))

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(k) for k in range(len(sizes))]
    total, mean, m2 = _merge(parts)
    return mean, m2 / total


def replicate(fn: Callable[[np.random.Generator], float], m: int, seed: int,
              workers: int = 1, tag: tuple = ()) -> np.ndarray:
    """``m`` independent replications, replication ``r`` using stream ``r``."""
    def one(r):
        return fn(block_rng(seed, r, *tag))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(one, range(m))), dtype=float)
    return np.array([one(r) for r in range(m)], dtype=float)
