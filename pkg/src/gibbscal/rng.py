"""Seed splitting.

Every random stream in the package is derived from a root seed and a tuple
of non-negative integer keys::

    stream(seed, *keys) = Generator(PCG64(SeedSequence(seed, spawn_key=keys)))

Streams with different key tuples are statistically independent, and a
stream's output depends only on ``(seed, keys)``. Bootstrap replicate ``b``
therefore always sees the same draws no matter how many other replicates or
grid points are evaluated.
"""

import numpy as np


def stream(seed, *keys):
    """Return an independent generator for ``(seed, keys)``."""
    keys = tuple(int(k) for k in keys)
    if any(k < 0 for k in keys):
        raise ValueError("stream keys must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=keys)))


def float_key(value):
    """Integer key that identifies a float bit-for-bit."""
    return int(np.float64(value).view(np.uint64))
