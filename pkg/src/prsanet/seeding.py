"""Deterministic per-component random substreams.

All randomness in a run flows from one master seed; independent components
(synthetic videos, model init, per-epoch shuffles) derive their own stream
by hashing a stable component name into the seed sequence.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> tuple[int, ...]:
    digest = hashlib.sha256(name.encode()).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator derived from a master seed and a component name."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, *_name_key(name)]))


def derive_seed(seed: int, name: str) -> int:
    """Stable 31-bit integer seed for libraries that take plain ints."""
    return int(substream(seed, name).integers(0, 2**31 - 1))
