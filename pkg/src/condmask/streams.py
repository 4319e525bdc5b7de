"""Seeded random streams.

All randomness goes through Philox4x64 (counter-based) generators. A stream
is identified by a root seed plus an integer key path, e.g. ``(n_index, s)``
for replication ``s`` of an experiment; ``SeedSequence`` spawn keys make each
keyed stream statistically independent of every other and independent of
the order in which streams are created. That is what keeps parallel runs
bit-identical to serial ones.
"""
from __future__ import annotations

import secrets

import numpy as np


def fresh_seed() -> int:
    """Draw a 64-bit seed from system entropy."""
    return secrets.randbits(64)


def make_stream(seed: int | None, *key: int) -> np.random.Generator:
    if seed is None:
        seed = fresh_seed()
    if int(seed) < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
