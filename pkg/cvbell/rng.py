"""Seeded, splittable random streams.

Every stochastic draw in the package comes from a Philox generator keyed by
``SeedSequence(seed, spawn_key=(purpose, *ids))``. Philox is counter based, so
the bit stream for a given key is identical across platforms and independent
of the order in which streams are created.
"""

from __future__ import annotations

import numpy as np

STATE = 0
SETTINGS = 1
OUTCOMES = 2
DETECTION = 3
NOISE = 4


def stream(seed: int, purpose: int, *ids: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"Seed must be a non-negative integer, got {seed}")
    key = (int(purpose), *(int(i) for i in ids))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))
