"""Stateless seed derivation.

``SeedSequence.spawn`` advances an internal counter, so spawning twice from
the same object yields different streams. ``children`` always returns what the
first ``spawn(n)`` on a fresh sequence would.
"""
from __future__ import annotations

import numpy as np


def as_seed(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def children(seed, n: int) -> list[np.random.SeedSequence]:
    ss = as_seed(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, i), pool_size=ss.pool_size)
            for i in range(n)]
