"""Reproducible random streams.

Monte Carlo work is cut into fixed-size blocks of paths.  Block ``k`` of
stream ``s`` under seed ``seed`` always draws from
``SeedSequence(seed, spawn_key=(s, k))``, so results do not depend on how
blocks are distributed over workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError

BLOCK_SIZE = 8192
SEED_ENV = "RELAXKIT_SEED"

# stream identifiers, one per kind of experiment
STREAM_INVERSE = 1
STREAM_INCREMENT = 2
STREAM_WAITING = 3
STREAM_OCCUPANCY = 4
STREAM_RETURNS = 5


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def resolve_seed(seed) -> int:
    """Explicit seed, else ``$RELAXKIT_SEED``; stochastic commands need one."""
    if seed is None:
        env = os.environ.get(SEED_ENV)
        if env is None:
            raise ConfigError(f"a seed is required (pass --seed or set {SEED_ENV})")
        seed = env
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {seed!r}") from None
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    return seed


def block_sizes(n: int, block: int = BLOCK_SIZE):
    full, rest = divmod(int(n), block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(fn, n: int, workers: int = 1):
    """``[fn(k, size_k) for each block k]`` in block order, optionally threaded."""
    sizes = block_sizes(n)
    if workers <= 1 or len(sizes) <= 1:
        return [fn(k, m) for k, m in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))
