"""Seed derivation: every random stream is a pure function of (seed, keys).

Streams are PCG64 generators seeded from ``SeedSequence(seed, spawn_key=keys)``,
so any sub-stream can be rebuilt without replaying the others.
"""

from __future__ import annotations

import numpy as np

# stream tags, first element of the spawn key
INIT = 1
PLANT = 2
DATA = 3
SWEEP = 4
PERTURB = 5
REPLICATION = 6
PROBE = 7


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
