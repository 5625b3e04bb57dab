# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled word kernels: popcount, XNOR dot products, and the bit-GEMM.

Same contract and word layout as the pure-numpy backend (_bitops_py).
"""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint64_t

NAME = "compiled"

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #  define BINEEG_POPCNT64(x) __builtin_popcountll(x)
    #else
    static inline int BINEEG_POPCNT64(unsigned long long v) {
        v = v - ((v >> 1) & 0x5555555555555555ULL);
        v = (v & 0x3333333333333333ULL) + ((v >> 2) & 0x3333333333333333ULL);
        v = (v + (v >> 4)) & 0x0F0F0F0F0F0F0F0FULL;
        return (int)((v * 0x0101010101010101ULL) >> 56);
    }
    #endif
    """
    int BINEEG_POPCNT64(uint64_t x) nogil


cdef inline uint64_t _tail_mask(int64_t n) nogil:
    cdef int64_t r = n & 63
    if r == 0:
        return <uint64_t>0xFFFFFFFFFFFFFFFFULL
    return (<uint64_t>1 << r) - 1


def tail_mask(n):
    return np.uint64(_tail_mask(n))


def popcount(words):
    cdef const uint64_t[::1] w = np.ascontiguousarray(words, dtype=np.uint64)
    cdef int64_t total = 0
    cdef Py_ssize_t i
    with nogil:
        for i in range(w.shape[0]):
            total += BINEEG_POPCNT64(w[i])
    return int(total)


def xnor_dot_words(a, b, n):
    cdef const uint64_t[::1] av = np.ascontiguousarray(a, dtype=np.uint64)
    cdef const uint64_t[::1] bv = np.ascontiguousarray(b, dtype=np.uint64)
    cdef int64_t nn = n
    if nn == 0:
        return 0
    cdef int64_t matches = 0
    cdef Py_ssize_t w = av.shape[0]
    cdef Py_ssize_t i
    cdef uint64_t mask = _tail_mask(nn)
    with nogil:
        for i in range(w - 1):
            matches += BINEEG_POPCNT64(~(av[i] ^ bv[i]))
        matches += BINEEG_POPCNT64((~(av[w - 1] ^ bv[w - 1])) & mask)
    return int(2 * matches - nn)


def bit_gemm(a, b, n):
    cdef const uint64_t[:, ::1] av = np.ascontiguousarray(a, dtype=np.uint64)
    cdef const uint64_t[:, ::1] bv = np.ascontiguousarray(b, dtype=np.uint64)
    cdef Py_ssize_t p = av.shape[0]
    cdef Py_ssize_t o = bv.shape[0]
    cdef Py_ssize_t w = av.shape[1]
    cdef int64_t nn = n
    out_arr = np.empty((p, o), dtype=np.int32)
    cdef int32_t[:, ::1] out = out_arr
    if nn == 0:
        out_arr[:] = 0
        return out_arr
    cdef uint64_t mask = _tail_mask(nn)
    cdef Py_ssize_t i, j, k
    cdef int64_t matches
    with nogil:
        for i in range(p):
            for j in range(o):
                matches = 0
                for k in range(w - 1):
                    matches += BINEEG_POPCNT64(~(av[i, k] ^ bv[j, k]))
                matches += BINEEG_POPCNT64((~(av[i, w - 1] ^ bv[j, w - 1])) & mask)
                out[i, j] = <int32_t>(2 * matches - nn)
    return out_arr
