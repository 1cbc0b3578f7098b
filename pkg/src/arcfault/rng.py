"""Seed derivation for the counter-based generator used everywhere.

String parts are folded in via crc32 so derived streams are stable
across processes (unlike the builtin hash) and platforms.
"""

from __future__ import annotations

import zlib

import numpy as np


def seed_material(parts) -> tuple[int, ...]:
    if not isinstance(parts, tuple):
        parts = (parts,)
    return tuple(
        zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in parts
    )


def make_rng(parts) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed_material(parts)))
    )


def derive_seed(parts) -> int:
    seq = np.random.SeedSequence(seed_material(parts))
    return int(seq.generate_state(1, np.uint64)[0] >> np.uint64(1))
