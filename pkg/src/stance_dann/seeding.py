"""Deterministic RNG derivation.

Every random draw in the package flows through a generator built here, so
(seed, purpose tags) fully determine behaviour across runs and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def seed_sequence(seed: int, *tags: int | str) -> np.random.SeedSequence:
    """SeedSequence from an integer seed plus namespacing tags.

    String tags are hashed so distinct purposes ("init", "sample", ...)
    never share a stream even under equal integer parts.
    """
    entropy = [int(seed) & _MASK64]
    for tag in tags:
        if isinstance(tag, str):
            digest = hashlib.sha256(tag.encode("utf-8")).digest()
            entropy.append(int.from_bytes(digest[:8], "little"))
        else:
            entropy.append(int(tag) & _MASK64)
    return np.random.SeedSequence(entropy)


def rng_for(seed: int, *tags: int | str) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *tags))
