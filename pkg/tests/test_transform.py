import numpy as np
import pytest

from cwpolar.errors import BadLength
from cwpolar.transform import (PolarIndexing, bit_reversal_permutation,
                               polar_transform, transform_matrix)


def test_two_bit_butterfly():
    assert list(polar_transform([0, 0])) == [0, 0]
    assert list(polar_transform([1, 0])) == [1, 0]
    assert list(polar_transform([0, 1])) == [1, 1]
    assert list(polar_transform([1, 1])) == [0, 1]


def test_involution():
    rng = np.random.default_rng(0)
    for n in (1, 2, 4, 8, 32, 256):
        x = rng.integers(0, 2, n, dtype=np.uint8)
        assert np.array_equal(polar_transform(polar_transform(x)), x)


def test_linear_over_gf2():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 2, 16, dtype=np.uint8)
    b = rng.integers(0, 2, 16, dtype=np.uint8)
    assert np.array_equal(polar_transform(a ^ b),
                          polar_transform(a) ^ polar_transform(b))
    assert not polar_transform(np.zeros(16, dtype=np.uint8)).any()


def test_doubled_block_interleaves_half_transforms():
    """Even output slots carry the xor of the halves, odd slots the right half."""
    rng = np.random.default_rng(2)
    for n in (2, 4, 16):
        x = rng.integers(0, 2, 2 * n, dtype=np.uint8)
        left = polar_transform(x[:n])
        right = polar_transform(x[n:])
        full = polar_transform(x)
        assert np.array_equal(full[0::2], left ^ right)
        assert np.array_equal(full[1::2], right)


def test_matrix_matches_function_and_is_involution():
    rng = np.random.default_rng(3)
    for n in (2, 8, 16):
        g = transform_matrix(n)
        assert np.array_equal(g @ g % 2, np.eye(n, dtype=np.uint8))
        x = rng.integers(0, 2, n, dtype=np.uint8)
        assert np.array_equal(polar_transform(x), x @ g % 2)


def test_bit_reversal_permutation():
    assert list(bit_reversal_permutation(8)) == [0, 4, 2, 6, 1, 5, 3, 7]
    for n in (2, 16, 64):
        perm = bit_reversal_permutation(n)
        assert sorted(perm) == list(range(n))
        assert np.array_equal(perm[perm], np.arange(n))


def test_rejects_non_power_of_two():
    with pytest.raises(BadLength):
        polar_transform([0, 1, 1])
    with pytest.raises(BadLength):
        transform_matrix(0)
    with pytest.raises(BadLength):
        bit_reversal_permutation(12)


def test_indexing_children_and_parents():
    ix = PolarIndexing(8)
    assert ix.levels == 3
    assert ix.children(3) == (5, 6)
    assert ix.parent(5) == 3 and ix.parent(6) == 3
    assert ix.is_minus(5) and not ix.is_minus(6)
    with pytest.raises(BadLength):
        ix.children(9)
    with pytest.raises(BadLength):
        ix.parent(0)
