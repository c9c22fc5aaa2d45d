"""Named random streams derived from one master seed.

Each stream is keyed by ``(seed, hash(name_1), hash(name_2), ...)`` through
:class:`numpy.random.SeedSequence`, so adding a new component never shifts
the draws of an existing one.
"""

import hashlib

import numpy as np

SEED_MAX = 2**64 - 1


def name_key(name) -> int:
    """Stable 32-bit key for a stream name (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(str(name).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, *names) -> np.random.Generator:
    if not 0 <= int(seed) <= SEED_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    keys = tuple(name_key(n) for n in names)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=keys))
