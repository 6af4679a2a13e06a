"""Seeding scheme.

Every stream is a numpy ``Generator`` over the Philox4x64 counter-based bit
generator, keyed by a ``SeedSequence``. Child streams are addressed by a
spawn key, so ``child(master, sweep_index, replication, stream)`` names the
same stream regardless of execution order or process layout.
"""
from __future__ import annotations

import numpy as np

ALGORITHM = "Philox4x64-10 via numpy SeedSequence spawn keys"


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def child(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))


def child_seed(master: int, *key: int) -> int:
    """64-bit integer seed for the child stream at ``key``."""
    return int(child(master, *key).generate_state(1, np.uint64)[0])
