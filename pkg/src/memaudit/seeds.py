"""Deterministic seed derivation for nested pipeline stages.

Every stage that draws randomness derives its own integer seed from the
run seed plus its coordinates (iteration index, sample position, dataset
name, ...), so results do not depend on execution order or thread count.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(*parts: int | str) -> int:
    """Collapse mixed int/string coordinates into one stable 32-bit seed."""
    entropy = [
        zlib.crc32(p.encode("utf-8")) if isinstance(p, str) else int(p) & 0xFFFFFFFF
        for p in parts
    ]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def rng_for(*parts: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
