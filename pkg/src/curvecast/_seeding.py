"""Named random sub-streams derived from a single integer seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, purpose: str, *index: int) -> int:
    """Hash ``(seed, purpose, *index)`` into a 64-bit integer seed.

    Adding a new consumer with a fresh ``purpose`` never perturbs the streams
    of existing consumers.
    """
    key = f"{int(seed)}|{purpose}|" + ",".join(str(int(i)) for i in index)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, purpose: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, purpose, *index))
