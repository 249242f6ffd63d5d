"""Counter-based random streams.

Every random draw in the library comes from a Philox generator whose key is
derived from a 64-bit seed plus a tuple of stream keys, so simulation of a
(replicate, site) pair or an MCMC chain never depends on what else ran first.
"""

from enum import IntEnum

import numpy as np

SEED_LIMIT = 2**64


class Stream(IntEnum):
    """Top-level stream namespaces."""

    SITE = 1
    VALIDATION = 2
    COVARIATE = 3
    SUBSET = 4
    CHAIN = 5
    STUDY = 6
    CALIBRATION = 7


def stream(seed: int, *keys: int) -> np.random.Generator:
    """
    Create an independent generator for (seed, keys).

    Args:
        seed: Master seed in [0, 2**64)
        *keys: Non-negative stream keys

    Returns:
        numpy Generator backed by Philox
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a child 64-bit seed for (seed, keys)."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
