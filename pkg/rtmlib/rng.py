"""
Keyed random streams.

Every random draw in a run comes from a generator seeded by the master seed and a
key naming its purpose and stage, e.g. (MUTATION, repeat, n, r, step). Streams for
different keys are statistically independent, and a given key always yields the
same numbers, whatever the order in which stages or workers ask for them.
"""

import enum

import numpy as np


class Stream(enum.IntEnum):
    TRUTH = 1
    NOISE = 2
    ENSEMBLE = 3
    RESAMPLE = 4
    MUTATION = 5
    PERTURBATION = 6


def stream(seed: int, purpose: Stream, *indices: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    key = (int(purpose),) + tuple(int(i) for i in indices)
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key))
    )
