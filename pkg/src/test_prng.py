import numpy as np
import pytest

from services import prng


def test_splitmix64_reference_output():
    assert int(prng.splitmix64(0, 1)[0]) == 0xE220A8397B1DCDAF


def test_stream_slices_are_addressable():
    full = prng.splitmix64(12345, 10)
    np.testing.assert_array_equal(prng.splitmix64(12345, 4, offset=6), full[6:])


def test_derive_seed_follows_the_stream():
    assert prng.derive_seed(99, 3) == int(prng.splitmix64(99, 1, offset=3)[0])
    assert prng.derive_seed(99, 3, 5) == prng.derive_seed(prng.derive_seed(99, 3), 5)
    assert prng.derive_seed(99) == 99


def test_uniforms_range_and_mean():
    u = prng.uniforms(2024, 100000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert u.mean() == pytest.approx(0.5, abs=0.01)


def test_random_bits_are_fair():
    bits = prng.random_bits(5, 100000)
    assert set(np.unique(bits)) <= {0, 1}
    assert bits.mean() == pytest.approx(0.5, abs=0.01)


def test_permutation_is_deterministic_and_bijective():
    perm = prng.permutation(77, 1536)
    np.testing.assert_array_equal(np.sort(perm), np.arange(1536))
    np.testing.assert_array_equal(perm, prng.permutation(77, 1536))
    assert not np.array_equal(perm, prng.permutation(78, 1536))
    with pytest.raises(ValueError):
        perm[0] = 1
