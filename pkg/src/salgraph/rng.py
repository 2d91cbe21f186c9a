"""Deterministic random streams derived from one run seed.

Every consumer gets its own named stream so adding a new consumer never
shifts the draws of existing ones.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for (seed, label); stable across runs."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng([int(seed), zlib.crc32(label.encode("utf-8"))])
