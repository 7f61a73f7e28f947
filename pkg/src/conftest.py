import numpy as np
import pytest

from data import storage
from data.models import DecoderParams, LdpcCode, ParityCheck, TrainConfig
from services import prng
from services.gf2_ldpc import derive_generator
from services.training import train_greedy

TINY_CHECKS = 8
TINY_COLUMN = (0, 1, 3)


@pytest.fixture(scope="session")
def bg2_code() -> LdpcCode:
    return storage.get_code()


def make_tiny_code(seed: int = 7) -> LdpcCode:
    """
    (16, 8) code H = [A | I] with column i of A on rows {i, i+1, i+3} mod 8,
    columns shuffled by ``seed``. Differences of {0, 1, 3} are distinct mod 8,
    so no two columns share two checks (no 4-cycles) and H has full rank.
    """
    a = np.zeros((TINY_CHECKS, TINY_CHECKS), dtype=np.uint8)
    for column in range(TINY_CHECKS):
        a[[(column + offset) % TINY_CHECKS for offset in TINY_COLUMN], column] = 1
    dense = np.concatenate([a, np.eye(TINY_CHECKS, dtype=np.uint8)], axis=1)
    h = ParityCheck.from_dense(dense[:, prng.permutation(seed, 2 * TINY_CHECKS)])
    return LdpcCode(h, derive_generator(h), f"tiny-{seed}")


@pytest.fixture(scope="session")
def tiny_code() -> LdpcCode:
    return make_tiny_code()


@pytest.fixture(scope="session")
def trained_neural(bg2_code) -> DecoderParams:
    """Shared-factor neural min-sum trained for 100 iterations on BG2 (long)"""
    return train_greedy(bg2_code.h, TrainConfig(100), bg2_code.g)
