"""Named, splittable random streams.

Every random draw in a run is derived from one master seed plus a path of
names, e.g. ``stream(seed, "graph", 3, "sample", "healthy")``. The path is
mapped to a ``SeedSequence`` spawn key, so two streams never overlap and a
stream does not depend on how many other streams were used before it.
"""

from __future__ import annotations

import zlib
from typing import Union

import numpy as np

RNG_ALGORITHM = "numpy-PCG64/SeedSequence-spawn-key-v1"

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def _key(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream indices must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(master_seed: int, *path) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def stream_seed(master_seed: int, *path) -> int:
    """A 63-bit integer seed for ``path``, for APIs that take plain ints."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(_key(p) for p in path))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(seed))
