"""Deterministic RNG derivation.

Every random draw in the toolkit flows through a numpy Generator obtained
from :func:`derive_rng`. Seeds are combined through ``SeedSequence`` so a
stream for (seed, key...) is independent of the order in which sibling
streams are consumed; this is what makes batch generation order-independent
and parallelizable without changing results.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = 2**64


def _entropy_of(key: int | str) -> int:
    if isinstance(key, int):
        return key % _U64
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Generator for the stream identified by (seed, *keys)."""
    entropy = [_entropy_of(seed)] + [_entropy_of(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *keys: int | str) -> int:
    """Stable 63-bit integer sub-seed for the stream (seed, *keys)."""
    entropy = [_entropy_of(seed)] + [_entropy_of(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0] >> 1)


def round_half_up(x: float) -> int:
    """Round with ties away from zero (predictable quota arithmetic)."""
    import math

    return int(math.floor(x + 0.5))


def night_quota(n: int, night_fraction: float) -> int:
    """Number of night items in a batch of ``n`` at the given fraction."""
    return round_half_up(n * night_fraction)


def is_night_index(i: int, night_fraction: float) -> bool:
    """Whether item ``i`` of a batch is a night item.

    Defined so every prefix of length k contains exactly
    ``night_quota(k, night_fraction)`` night items; assignment depends only
    on the index, never on batch size or iteration order.
    """
    return night_quota(i + 1, night_fraction) > night_quota(i, night_fraction)
