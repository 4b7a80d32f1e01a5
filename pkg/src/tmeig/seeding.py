"""Reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by a 64-bit seed.
Sub-streams are keyed by hashing the parent seed together with a purpose
tag and any indices, so cells of a sweep can run in any order or process.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed, *parts):
    """64-bit seed from ``seed`` and an arbitrary tuple of tags/indices."""
    text = "|".join([str(int(seed) & MASK64)] + [_canon(p) for p in parts])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _canon(part):
    if isinstance(part, float):
        return repr(round(part, 12))
    return str(part)


def make_rng(seed, *parts):
    if parts:
        seed = derive_seed(seed, *parts)
    return np.random.Generator(np.random.Philox(int(seed) & MASK64))
