"""Deterministic RNG streams derived from a single 64-bit master seed.

Every estimator in this package draws randomness through per-index
substreams: sample ``i`` of a run seeded with ``s`` always uses the
generator ``substream(s, i)``, regardless of how samples are sharded
across workers. That makes results reproducible bit-for-bit under any
worker count.
"""

from __future__ import annotations

import numpy as np

SeedLike = "int | np.random.SeedSequence | np.random.Generator"


def as_generator(seed) -> np.random.Generator:
    """Coerce an int, SeedSequence, or Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, (int, np.integer)):
        if seed < 0:
            raise ValueError("seeds must be non-negative integers")
        return np.random.default_rng(np.random.SeedSequence(int(seed)))
    raise TypeError(f"cannot seed a generator from {type(seed).__name__}")


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream indexed by ``key``.

    The master seed and the index tuple are mixed into the seed
    sequence's entropy, so distinct keys give statistically independent
    streams and the same key always reproduces the same stream.
    """
    if master_seed < 0:
        raise ValueError("seeds must be non-negative integers")
    entropy = (int(master_seed),) + tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))
