"""Splittable seed derivation.

Every random stream in a simulation is keyed by ``(master_seed, purpose,
client, round)`` so results never depend on the order in which streams are
created or on how client work is scheduled across workers.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def derive_seed(master_seed: int, purpose: str, *keys: int) -> np.random.SeedSequence:
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, _tag(purpose)]
    entropy.extend(int(k) + 1 for k in keys)
    return np.random.SeedSequence(entropy)


def stream(master_seed: int, purpose: str, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, purpose, *keys))


def int_seed(master_seed: int, purpose: str, *keys: int) -> int:
    return int(derive_seed(master_seed, purpose, *keys).generate_state(1, np.uint64)[0])
