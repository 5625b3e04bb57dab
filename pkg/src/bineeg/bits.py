"""Binarization, bit packing, and XNOR-popcount arithmetic.

A +-1 vector is packed into uint64 words, little-endian bit order: bit i of
word w encodes element ``w*64 + i``, bit value 1 <-> +1 and 0 <-> -1. Bits at
positions >= the logical length are always zero (canonical tail), so masked
XNOR popcounts never see stale bits.

The word kernels come from the compiled extension when it was built, with a
pure-numpy fallback selected at import time. Both backends are kept importable
for the packed-vs-naive benchmark.
"""

import numpy as np

from . import _bitops_py
from .errors import InvalidValue, ShapeMismatch

try:
    from . import _bitops as _active
    HAVE_COMPILED = True
except ImportError:  # extension not built; numpy fallback
    _active = _bitops_py
    HAVE_COMPILED = False

WORD_BITS = 64


def backends():
    """Importable word-kernel backends, keyed by name."""
    found = {_bitops_py.NAME: _bitops_py}
    if HAVE_COMPILED:
        from . import _bitops
        found[_bitops.NAME] = _bitops
    return found


def active_backend_name():
    return _active.NAME


class BitTensor:
    """A packed +-1 vector: logical length plus uint64 words with canonical tail."""

    __slots__ = ("logical_len", "words")

    def __init__(self, logical_len, words):
        self.logical_len = int(logical_len)
        self.words = np.ascontiguousarray(words, dtype=np.uint64)
        expected = (self.logical_len + WORD_BITS - 1) // WORD_BITS
        if self.words.shape != (expected,):
            raise ShapeMismatch(
                f"need {expected} words for {self.logical_len} bits, got {self.words.shape}"
            )

    def __len__(self):
        return self.logical_len

    def __eq__(self, other):
        return (
            isinstance(other, BitTensor)
            and self.logical_len == other.logical_len
            and np.array_equal(self.words, other.words)
        )

    def __repr__(self):
        return f"BitTensor(len={self.logical_len}, words={self.words.shape[0]})"


def binarize(x):
    """Sign binarization: +1 for x >= 0, -1 otherwise. sign(0) = +1."""
    if np.isnan(x):
        raise InvalidValue("cannot binarize NaN")
    return 1 if x >= 0 else -1


def binarize_array(x):
    """Vectorized sign binarization, dtype-preserving for float inputs."""
    one = np.asarray(1, dtype=x.dtype if hasattr(x, "dtype") else np.float32)
    return np.where(np.asarray(x) >= 0, one, -one)


def pack(values):
    """Pack a sequence of +-1 values into a BitTensor."""
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ShapeMismatch(f"expected a 1-D sequence, got shape {arr.shape}")
    words = _pack_bits(arr == 1, _check_domain(arr))
    return BitTensor(arr.shape[0], words[0])


def pack_rows(mat):
    """Pack each row of a (R, n) +-1 matrix; returns (words (R, W) uint64, n)."""
    arr = np.asarray(mat)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {arr.shape}")
    return _pack_bits(arr == 1, _check_domain(arr)), arr.shape[1]


def _check_domain(arr):
    if arr.size and not np.all(np.abs(arr) == 1):
        raise InvalidValue("values must all be +1 or -1")
    return arr


def _pack_bits(bits, _arr):
    bits2d = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    packed = np.packbits(bits2d, axis=1, bitorder="little")
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.pad(packed, ((0, 0), (0, pad)))
    if packed.shape[1] == 0:
        return np.zeros((bits2d.shape[0], 0), dtype=np.uint64)
    return packed.view("<u8").astype(np.uint64, copy=False)


def unpack(bt):
    """Inverse of pack: the +-1 values as an int8 array."""
    if bt.logical_len == 0:
        return np.zeros(0, dtype=np.int8)
    as_bytes = bt.words.astype("<u8").view(np.uint8)
    bits = np.unpackbits(as_bytes, bitorder="little")[: bt.logical_len]
    return np.where(bits == 1, 1, -1).astype(np.int8)


def xnor_dot(a, b):
    """Signed dot product over +-1 values: 2*popcount(XNOR masked) - n."""
    if a.logical_len != b.logical_len:
        raise ShapeMismatch(f"length mismatch: {a.logical_len} vs {b.logical_len}")
    return _active.xnor_dot_words(a.words, b.words, a.logical_len)


def bit_gemm(rows, weights, n, backend=None):
    """All-pairs signed dots between packed row and weight matrices."""
    ops = _active if backend is None else backends()[backend]
    return ops.bit_gemm(rows, weights, n)


def ste_backward(upstream_grad, preactivation):
    """Surrogate gradient through sign: pass when |preactivation| <= 1, else 0."""
    if not (np.isfinite(upstream_grad) and np.isfinite(preactivation)):
        raise InvalidValue("ste_backward requires finite inputs")
    return upstream_grad if -1.0 <= preactivation <= 1.0 else 0.0 * upstream_grad


def ste_backward_array(upstream_grad, preactivation):
    """Vectorized surrogate gradient: g * 1[|x| <= 1]."""
    g = np.asarray(upstream_grad)
    x = np.asarray(preactivation)
    return g * (np.abs(x) <= 1.0)


def clip_latent(w):
    """Clamp a latent weight to [-1, 1]."""
    return max(-1.0, min(1.0, w))


def clip_latent_array(w, out=None):
    """Vectorized latent clamp; writes into out (or a copy) and returns it."""
    return np.clip(w, -1.0, 1.0, out=out)
