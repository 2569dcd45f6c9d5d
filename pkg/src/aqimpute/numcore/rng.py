"""Seed derivation so every stochastic component gets its own stream."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    """Stable 63-bit child seed from a root seed and any hashable-as-str keys."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    words += [zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0] >> np.uint64(1))


def make_rng(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
