"""Binary polar transform with the bit-reversed (interleaved) convention.

The transform is u = x . G with G = B F^(x n), where F = [[1,0],[1,1]] and B is
the bit-reversal permutation. B F^(x n) is an involution over GF(2), so the same
function maps x to u and u back to x. Under this convention the transform of a
doubled block interleaves the transforms U, V of its halves:

    w[2i]   = U[i] xor V[i]        (even slots, 0-based: the "minus" bits)
    w[2i+1] = V[i]                 (odd slots: the "plus" bits)

which is the index pairing used throughout the successive-cancellation recursion.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadLength


def _check_block_length(n_bits: int) -> int:
    if n_bits < 1 or (n_bits & (n_bits - 1)) != 0:
        raise BadLength(f"block length {n_bits} is not a power of two")
    return n_bits.bit_length() - 1


def polar_transform(x) -> np.ndarray:
    """Apply the transform to a 0/1 vector whose length is a power of two.

    Involution: polar_transform(polar_transform(x)) == x.
    """
    u = np.asarray(x, dtype=np.uint8).copy()
    _check_block_length(u.size)
    length = 1
    while length < u.size:
        half = u.reshape(-1, 2 * length)
        a = half[:, :length].copy()
        b = half[:, length:].copy()
        half[:, 0::2] = a ^ b
        half[:, 1::2] = b
        length *= 2
    return u


def bit_reversal_permutation(n_bits: int) -> np.ndarray:
    """Index permutation r with r[i] = reverse of i's log2(n_bits)-bit pattern."""
    n = _check_block_length(n_bits)
    perm = np.zeros(n_bits, dtype=np.int64)
    for i in range(n_bits):
        r = 0
        v = i
        for _ in range(n):
            r = (r << 1) | (v & 1)
            v >>= 1
        perm[i] = r
    return perm


def transform_matrix(n_bits: int) -> np.ndarray:
    """Dense GF(2) matrix G with polar_transform(x) == x . G (mod 2)."""
    _check_block_length(n_bits)
    rows = np.eye(n_bits, dtype=np.uint8)
    return np.array([polar_transform(r) for r in rows], dtype=np.uint8)


@dataclass(frozen=True)
class PolarIndexing:
    """Index bookkeeping for one block length.

    Indices are 1-based in reports to match the usual u_1..u_N numbering;
    helper methods accept and return 1-based positions.
    """

    block_len: int
    convention: str = "bit-reversed-kronecker"

    def __post_init__(self):
        _check_block_length(self.block_len)

    @property
    def levels(self) -> int:
        return self.block_len.bit_length() - 1

    def children(self, i: int) -> tuple[int, int]:
        """Indices (minus, plus) at block 2N that refine index i at block N."""
        if not 1 <= i <= self.block_len:
            raise BadLength(f"index {i} out of range 1..{self.block_len}")
        return 2 * i - 1, 2 * i

    def parent(self, j: int) -> int:
        """Index at block N/2 whose refinement produced index j at block N."""
        if not 1 <= j <= self.block_len:
            raise BadLength(f"index {j} out of range 1..{self.block_len}")
        return (j + 1) // 2

    def is_minus(self, j: int) -> bool:
        return j % 2 == 1
