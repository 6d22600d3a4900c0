"""Reproducible counter-based random streams.

Every stochastic operation in the package draws from a Philox stream keyed
by a user seed plus an integer path (purpose tag, step, chunk index, ...),
so results are reproducible regardless of call order or thread scheduling.
"""

import numpy as np

_U64 = (1 << 64) - 1


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for (seed, *path).

    The same (seed, path) always yields the same stream; distinct paths
    yield statistically independent streams.
    """
    key = np.random.SeedSequence(entropy=int(seed) & _U64,
                                 spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(key))
