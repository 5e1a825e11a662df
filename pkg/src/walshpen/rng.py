"""Seeded random substreams.

All randomness derives from one 64-bit master seed. Paths are grouped in
fixed-size blocks; block ``b`` of stream ``s`` draws from
``SeedSequence([seed, s, b])``. Arrays are always drawn for a full block and
then sliced, so a path's random numbers depend only on (seed, stream, path
index) and never on ``n_paths`` or on how blocks are spread over workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK_SIZE = 4096

# Stream ids. Each consumer of randomness gets its own id so that adding a
# consumer never shifts the draws of another one.
STREAM_RADIAL = 1
STREAM_LABELS = 2
STREAM_LIMIT = 3
STREAM_EXP_BUDGET = 4
STREAM_BESSEL = 5
STREAM_RAY = 6
STREAM_PERMUTATION = 7
STREAM_AUX = 8

T = TypeVar("T")


@dataclass(frozen=True)
class Streams:
    """Factory of reproducible generators keyed by (stream, block)."""

    seed: int
    block_size: int = BLOCK_SIZE

    def generator(self, stream: int, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence([int(self.seed) & 0xFFFFFFFFFFFFFFFF, int(stream), int(block)])
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, tag: int) -> "Streams":
        """Streams for an independent sub-experiment (e.g. one suite case)."""
        ss = np.random.SeedSequence([int(self.seed) & 0xFFFFFFFFFFFFFFFF, 0xC0FFEE, int(tag)])
        return Streams(int(ss.generate_state(1, np.uint64)[0]), self.block_size)

    def blocks(self, n_paths: int) -> list[tuple[int, int, int]]:
        """(block index, first path, number of paths used from the block)."""
        out = []
        for b, start in enumerate(range(0, n_paths, self.block_size)):
            out.append((b, start, min(self.block_size, n_paths - start)))
        return out


def as_streams(rng: "Streams | int | None") -> Streams:
    if isinstance(rng, Streams):
        return rng
    if rng is None:
        return Streams(int(np.random.SeedSequence().generate_state(1, np.uint64)[0]))
    return Streams(int(rng))


def map_blocks(fn: Callable[[int, int, int], T], streams: Streams, n_paths: int,
               workers: int = 1) -> list[T]:
    """Apply ``fn(block, start, count)`` to every block; results in block order."""
    jobs: Sequence[tuple[int, int, int]] = streams.blocks(n_paths)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
