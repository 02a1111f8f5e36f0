"""Seeded random streams.

Every random draw in the package comes from a PCG64 generator seeded by a
``numpy.random.SeedSequence`` whose ``spawn_key`` encodes where the draw is
used, e.g. ``(BOOTSTRAP, replicate)`` or ``(SIMULATION, run)``. Results thus
depend only on ``(seed, key)``, never on how work is scheduled.
"""

import numpy as np

BOOTSTRAP = 1
SIMULATION = 2
CALIBRATION = 3

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))
