"""Pure-numpy word kernels: popcount, XNOR dot products, and the bit-GEMM.

Fallback backend when the compiled extension is unavailable. Word layout is
shared with the compiled backend: uint64 words, bit i of word w holds logical
element ``w*64 + i``, tail bits beyond the logical length are zero.
"""

import numpy as np

NAME = "python"

_ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def tail_mask(n):
    """Mask keeping the valid bits of the last word of an n-bit vector."""
    r = n & 63
    if r == 0:
        return _ALL_ONES
    return np.uint64((1 << r) - 1)


def popcount(words):
    """Total number of set bits across a uint64 array."""
    return int(np.bitwise_count(words).sum(dtype=np.int64))


def xnor_dot_words(a, b, n):
    """Signed +-1 dot product of two packed n-bit vectors."""
    if n == 0:
        return 0
    x = np.bitwise_not(np.bitwise_xor(a, b))
    x[-1] &= tail_mask(n)
    matches = int(np.bitwise_count(x).sum(dtype=np.int64))
    return 2 * matches - n

# Cap on the (rows x cols x words) scratch block; keeps peak memory ~tens of MB.
_GEMM_BLOCK_ELEMS = 1 << 21


def bit_gemm(a, b, n):
    """All-pairs signed dot products of packed rows: (P, W) x (O, W) -> (P, O) int32."""
    p, w = a.shape
    o = b.shape[0]
    out = np.empty((p, o), dtype=np.int32)
    if n == 0:
        out[:] = 0
        return out
    mask = tail_mask(n)
    step = max(1, _GEMM_BLOCK_ELEMS // max(1, o * w))
    nn = np.int32(n)
    for lo in range(0, p, step):
        hi = min(p, lo + step)
        x = np.bitwise_xor(a[lo:hi, None, :], b[None, :, :])
        np.bitwise_not(x, out=x)
        x[:, :, -1] &= mask
        matches = np.bitwise_count(x).sum(axis=2, dtype=np.int32)
        out[lo:hi] = 2 * matches - nn
    return out
