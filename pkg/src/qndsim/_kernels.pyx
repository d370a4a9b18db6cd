# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.  Semantics are defined by ``_fallback.py``."""

import numpy as np

from libc.stdint cimport uint64_t, int64_t

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef uint64_t TAG_ATOMS = 0xA70350002ULL


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline uint64_t draw(uint64_t key, uint64_t counter) noexcept nogil:
    return mix64(key + (counter + 1) * GAMMA)


def atomic_spin_sums(keys, n_atoms, threshold, out=None):
    cdef const uint64_t[::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef const int64_t[::1] na = np.ascontiguousarray(n_atoms, dtype=np.int64)
    if k.shape[0] != na.shape[0]:
        raise ValueError("keys and n_atoms must be equal-length 1-d arrays")
    if out is None:
        out = np.zeros((k.shape[0], 7), dtype=np.int64)
    cdef int64_t[:, ::1] res = out
    cdef uint64_t thr = <uint64_t>int(threshold)
    cdef Py_ssize_t t, a, n
    cdef uint64_t key, h0, h1, h2
    cdef int64_t s, f1, f2, a1, a2, b2, a3, b3, kept2, kept3
    cdef bint hit1, hit2
    with nogil:
        for t in range(k.shape[0]):
            key = mix64(k[t] ^ TAG_ATOMS)
            n = na[t]
            a1 = 0; a2 = 0; b2 = 0; a3 = 0; b3 = 0; kept2 = 0; kept3 = 0
            for a in range(n):
                h0 = draw(key, 3 * <uint64_t>a)
                h1 = draw(key, 3 * <uint64_t>a + 1)
                h2 = draw(key, 3 * <uint64_t>a + 2)
                s = 1 if (h0 >> 63) else -1
                f1 = 1 if (h1 & 1) else -1
                f2 = 1 if (h2 & 1) else -1
                hit1 = (h1 >> 1) < thr
                hit2 = (h2 >> 1) < thr
                a1 += s
                if hit1:
                    b2 += f1
                    if hit2:
                        b3 += f2
                    else:
                        b3 += f1
                else:
                    a2 += s
                    kept2 += 1
                    if hit2:
                        b3 += f2
                    else:
                        a3 += s
                        kept3 += 1
            res[t, 0] = a1
            res[t, 1] = a2
            res[t, 2] = b2
            res[t, 3] = a3
            res[t, 4] = b3
            res[t, 5] = kept2
            res[t, 6] = kept3
    return out


def resample_sums(x, keys, out=None):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const uint64_t[::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    if xv.shape[1] != 3:
        raise ValueError("x must have shape (n, 3)")
    cdef Py_ssize_t n = xv.shape[0]
    if n >= (<Py_ssize_t>1 << 32):
        raise ValueError("too many rows for 32-bit resampling")
    if out is None:
        out = np.zeros((k.shape[0], 9), dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef Py_ssize_t r, i, j
    cdef uint64_t h
    cdef double x0, x1, x2
    cdef double s0, s1, s2, s00, s01, s02, s11, s12, s22
    with nogil:
        for r in range(k.shape[0]):
            s0 = 0; s1 = 0; s2 = 0; s00 = 0; s01 = 0; s02 = 0; s11 = 0; s12 = 0; s22 = 0
            for i in range(n):
                h = draw(k[r], <uint64_t>i)
                j = <Py_ssize_t>(((h >> 32) * <uint64_t>n) >> 32)
                x0 = xv[j, 0]; x1 = xv[j, 1]; x2 = xv[j, 2]
                s0 += x0; s1 += x1; s2 += x2
                s00 += x0 * x0; s01 += x0 * x1; s02 += x0 * x2
                s11 += x1 * x1; s12 += x1 * x2; s22 += x2 * x2
            res[r, 0] = s0; res[r, 1] = s1; res[r, 2] = s2
            res[r, 3] = s00; res[r, 4] = s01; res[r, 5] = s02
            res[r, 6] = s11; res[r, 7] = s12; res[r, 8] = s22
    return out
