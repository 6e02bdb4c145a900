"""Counter-based random streams.

Every Monte Carlo loop in the package is cut into fixed-size chunks. Chunk
``i`` of stream ``s`` under seed ``seed`` always draws from the generator
seeded with ``SeedSequence([seed, s, i])``, so results do not depend on how
many workers process the chunks or in which order.
"""
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigurationError

CHUNK_SIZE = 1000

# stream ids
RESCALE = 1
CALIBRATE = 2
DATA = 3
ORACLE = 4
STUDY = 5

THREADS_ENV = "THRESHOVA_THREADS"


def generator(seed, stream, index=0):
    if seed < 0:
        raise ConfigurationError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream), int(index)])))


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            threads = 1
    if threads < 1:
        raise ConfigurationError(f"threads must be >= 1, got {threads}")
    return threads


def chunk_sizes(total, chunk_size=CHUNK_SIZE):
    n = math.ceil(total / chunk_size)
    return [min(chunk_size, total - i * chunk_size) for i in range(n)]


def _ordered_map(run, n, threads):
    threads = resolve_threads(threads)
    if threads == 1 or n <= 1:
        return [run(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(n)))


def map_chunks(fn, total, seed, stream, threads=None, chunk_size=CHUNK_SIZE):
    """Call ``fn(rng, size, index)`` on every chunk and return results in chunk order."""
    sizes = chunk_sizes(total, chunk_size)
    return _ordered_map(lambda i: fn(generator(seed, stream, i), sizes[i], i), len(sizes), threads)


def map_items(fn, n, seed, stream, threads=None):
    """Call ``fn(rng, index)`` for ``index < n``, each item on its own substream."""
    return _ordered_map(lambda i: fn(generator(seed, stream, i), i), n, threads)
