"""Seeded, splittable random streams."""

import numpy as np

_MASK = (1 << 64) - 1


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent PCG64 generator for ``(seed, *keys)``.

    Distinct key tuples give statistically independent streams, so parallel
    scenarios stay reproducible regardless of execution order.
    """
    entropy = [int(seed) & _MASK, *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
