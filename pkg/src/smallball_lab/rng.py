"""Counter-based random streams for deterministic parallel Monte Carlo.

Trials are grouped into fixed blocks of ``BLOCK_SIZE`` consecutive trial
indices.  Block ``b`` of a run with base seed ``seed`` and stream name
``stream`` draws from a Philox-4x64 generator whose

* key is ``SeedSequence([seed_lo, seed_hi, crc32(stream)]).generate_state(2, uint64)``
  where ``seed_lo``/``seed_hi`` are the low and high 32-bit halves of the
  64-bit seed, and
* counter is ``[0, 0, b, 0]``.

Trial ``t`` therefore lives in block ``t // BLOCK_SIZE`` at a fixed offset,
and its draws are a pure function of ``(seed, stream, t)``.  Blocks are
evaluated independently and reduced in block order, so results do not depend
on the number of worker threads.  This derivation is frozen: changing it
changes every published number.
"""
from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

from .errors import ParameterError

BLOCK_SIZE = 16384
THREADS_ENV = "SMALLBALL_LAB_THREADS"

T = TypeVar("T")

_MASK64 = (1 << 64) - 1


def stream_id(stream: str) -> int:
    return zlib.crc32(stream.encode("utf-8"))


def block_generator(seed: int, stream: str, block: int) -> np.random.Generator:
    """Generator for one trial block (see module docstring)."""
    seed = int(seed) & _MASK64
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, stream_id(stream)])
    key = ss.generate_state(2, np.uint64)
    counter = np.array([0, 0, block, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_seed(seed: int, *path: int) -> int:
    """64-bit child seed for a sub-run (sweep grid points, auxiliary estimates)."""
    seed = int(seed) & _MASK64
    words = [seed & 0xFFFFFFFF, seed >> 32, *[int(p) & 0xFFFFFFFF for p in path]]
    state = np.random.SeedSequence(words).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def resolve_threads(threads=None) -> int:
    """Thread count from an explicit value, ``"auto"``, or the environment."""
    if threads is None:
        threads = os.environ.get(THREADS_ENV, 1)
    if isinstance(threads, str):
        if threads.strip().lower() == "auto":
            return max(1, os.cpu_count() or 1)
        try:
            threads = int(threads)
        except ValueError:
            raise ParameterError(f"threads must be a positive integer or 'auto', got {threads!r}") from None
    threads = int(threads)
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    return threads


def block_sizes(trials: int) -> List[int]:
    full, rest = divmod(int(trials), BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def map_blocks(
    fn: Callable[[np.random.Generator, int], T],
    trials: int,
    seed: int,
    stream: str,
    threads=1,
) -> List[T]:
    """Evaluate ``fn(rng, size)`` on every trial block; results in block order."""
    sizes = block_sizes(trials)

    def work(b: int) -> T:
        return fn(block_generator(seed, stream, b), sizes[b])

    n_threads = min(resolve_threads(threads), max(1, len(sizes)))
    if n_threads == 1:
        return [work(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(work, range(len(sizes))))


def sample_blocks(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    trials: int,
    seed: int,
    stream: str,
    threads=1,
) -> np.ndarray:
    """Concatenate per-block sample arrays along the first axis."""
    parts = map_blocks(fn, trials, seed, stream, threads)
    return np.concatenate(parts, axis=0)
