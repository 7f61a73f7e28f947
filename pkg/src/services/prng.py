"""
SplitMix64, the project-wide deterministic generator.

Masks, permutations, BSC flip patterns, synthetic populations and test-mode
keys are all drawn from it so that regenerating them from persisted seeds is
bit-exact on every platform. Output ``i`` of the stream seeded with ``s`` is
``mix(s + (i + 1) * GAMMA)``, which makes any slice of the stream directly
addressable and lets us evaluate it with vectorised numpy arithmetic.
"""
from functools import lru_cache

import numpy as np

ALGORITHM_ID = "splitmix64"

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Return outputs ``offset .. offset+count-1`` of the stream seeded with ``seed``"""
    steps = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + steps * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(base_seed: int, *path: int) -> int:
    """
    Derive the seed of a sub-stream.

    Each index in ``path`` selects that output of the current stream as the
    next seed, so ``derive_seed(s, i)`` is the i-th SplitMix64 output of ``s``.
    """
    seed = base_seed & _MASK
    for index in path:
        seed = int(splitmix64(seed, 1, offset=int(index))[0])
    return seed


def uniforms(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Uniform doubles in [0, 1) built from the top 53 bits of each output"""
    return (splitmix64(seed, count, offset) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def random_bits(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Fair bits (the top bit of each output) as a uint8 array"""
    return (splitmix64(seed, count, offset) >> np.uint64(63)).astype(np.uint8)


@lru_cache(maxsize=32)
def _permutation(seed: int, length: int) -> np.ndarray:
    draws = uniforms(seed, length)
    perm = np.arange(length, dtype=np.int64)
    # Fisher-Yates from the back; draw i picks j uniformly in [0, i]
    for i in range(length - 1, 0, -1):
        j = int(draws[i] * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    perm.setflags(write=False)
    return perm


def permutation(seed: int, length: int) -> np.ndarray:
    """Seeded Fisher-Yates permutation of ``range(length)`` (read-only array)"""
    return _permutation(seed & _MASK, int(length))
